//! CSV ingestion: parse hourly pollutant/climate files, align them into one
//! gap-free hourly table, and impute missing cells.
//!
//! Pollutant CSV schema: `station_id,timestamp,so2,co,no2,o3,pm10,pm25` with
//! ISO-8601 hour timestamps and empty fields for missing values.
//! Climate CSV schema: `timestamp,wind_speed,wind_dir,humidity,vapor_pressure,
//! dew_point,surface_pressure,sunlight,visibility,surface_temp` where
//! `wind_dir` is one of the 16 compass sector codes.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::{CLIMATE_VARS, FEATURE_DIM, POLLUTANTS_PER_STATION, POLLUTANT_STATIONS};

/// 16-point compass rose, index 0..15 in column order of the climate CSV.
pub const WIND_SECTORS: [&str; 16] = [
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW",
    "NNW",
];

pub const POLLUTANT_HEADER: &str = "station_id,timestamp,so2,co,no2,o3,pm10,pm25";
pub const CLIMATE_HEADER: &str = "timestamp,wind_speed,wind_dir,humidity,vapor_pressure,dew_point,surface_pressure,sunlight,visibility,surface_temp";

/// Short names for the six per-station concentrations, in column order.
pub const POLLUTANT_NAMES: [&str; POLLUTANTS_PER_STATION] =
    ["so2", "co", "no2", "o3", "pm10", "pm25"];

/// Short names for the nine climate variables, in column order.
pub const CLIMATE_NAMES: [&str; CLIMATE_VARS] = [
    "wind_speed",
    "wind_dir",
    "humidity",
    "vapor_pressure",
    "dew_point",
    "surface_pressure",
    "sunlight",
    "visibility",
    "surface_temp",
];

/// One hourly row from a pollutant monitoring station.
///
/// Concentrations keep the station's raw units; `None` marks a missing
/// reading. Negative readings (sensor error markers) are treated as missing
/// at parse time so that present values are always non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PollutantRecord {
    pub station_id: usize,
    pub timestamp: NaiveDateTime,
    pub so2: Option<f64>,
    pub co: Option<f64>,
    pub no2: Option<f64>,
    pub o3: Option<f64>,
    pub pm10: Option<f64>,
    pub pm25: Option<f64>,
}

impl PollutantRecord {
    /// The six concentrations in column order.
    pub fn values(&self) -> [Option<f64>; POLLUTANTS_PER_STATION] {
        [self.so2, self.co, self.no2, self.o3, self.pm10, self.pm25]
    }
}

/// One hourly row from the climate observation station.
///
/// Wind direction is kept as a lossless sector index 0..15; its numeric
/// encoding happens in the features module.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateRecord {
    pub timestamp: NaiveDateTime,
    pub wind_speed: Option<f64>,
    pub wind_direction: Option<u8>,
    pub humidity: Option<f64>,
    pub vapor_pressure: Option<f64>,
    pub dew_point: Option<f64>,
    pub surface_pressure: Option<f64>,
    pub sunlight: Option<f64>,
    pub visibility: Option<f64>,
    pub surface_temp: Option<f64>,
}

impl ClimateRecord {
    /// The nine variables in column order, wind direction as a real index.
    pub fn values(&self) -> [Option<f64>; CLIMATE_VARS] {
        [
            self.wind_speed,
            self.wind_direction.map(f64::from),
            self.humidity,
            self.vapor_pressure,
            self.dew_point,
            self.surface_pressure,
            self.sunlight,
            self.visibility,
            self.surface_temp,
        ]
    }
}

/// Gap-free hourly value grid: one row per hour, 243 columns
/// (39 stations × 6 pollutants, then 9 climate variables).
///
/// Missing cells are NaN until [`impute_missing`] fills them; `imputed`
/// marks every cell that was filled rather than observed.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    start: NaiveDateTime,
    values: Array2<f64>,
    imputed: Array2<bool>,
}

/// Column index of pollutant `elem` (0..5) at `station` (0..38).
pub fn pollutant_col(station: usize, elem: usize) -> usize {
    debug_assert!(station < POLLUTANT_STATIONS && elem < POLLUTANTS_PER_STATION);
    station * POLLUTANTS_PER_STATION + elem
}

/// Column index of climate variable `var` (0..8).
pub fn climate_col(var: usize) -> usize {
    debug_assert!(var < CLIMATE_VARS);
    POLLUTANT_STATIONS * POLLUTANTS_PER_STATION + var
}

/// Human-readable column name, e.g. `station6.pm10` or `humidity`.
pub fn column_name(col: usize) -> String {
    let pollutant_cols = POLLUTANT_STATIONS * POLLUTANTS_PER_STATION;
    if col < pollutant_cols {
        format!(
            "station{}.{}",
            col / POLLUTANTS_PER_STATION,
            POLLUTANT_NAMES[col % POLLUTANTS_PER_STATION]
        )
    } else {
        CLIMATE_NAMES[col - pollutant_cols].to_string()
    }
}

impl ObservationTable {
    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    /// Number of hourly rows.
    pub fn n_hours(&self) -> usize {
        self.values.nrows()
    }

    /// Timestamp of row `row`.
    pub fn timestamp(&self, row: usize) -> NaiveDateTime {
        self.start + TimeDelta::hours(row as i64)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.values[[row, col]].is_nan()
    }

    pub fn is_imputed(&self, row: usize, col: usize) -> bool {
        self.imputed[[row, col]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn imputed_cells(&self) -> usize {
        self.imputed.iter().filter(|&&b| b).count()
    }

    /// Copy of the rows in `range`, keeping timestamps and imputation flags.
    pub fn slice_rows(&self, range: Range<usize>) -> ObservationTable {
        ObservationTable {
            start: self.timestamp(range.start),
            values: self
                .values
                .slice(ndarray::s![range.clone(), ..])
                .to_owned(),
            imputed: self.imputed.slice(ndarray::s![range, ..]).to_owned(),
        }
    }

    /// Row index of `ts`, if it falls on an exact hour inside the table.
    pub fn row_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let delta = ts - self.start;
        if delta.num_seconds() % 3600 != 0 {
            return None;
        }
        let row = delta.num_hours();
        if row >= 0 && (row as usize) < self.n_hours() {
            Some(row as usize)
        } else {
            None
        }
    }
}

fn parse_hour(s: &str) -> Result<NaiveDateTime> {
    let ts = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .map_err(|_| Error::BadTimestamp { got: s.to_string() })?;
    if ts.format("%M:%S").to_string() != "00:00" {
        return Err(Error::BadTimestamp { got: s.to_string() });
    }
    Ok(ts)
}

fn format_hour(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M").to_string()
}

/// Empty, unparseable, or negative fields all map to missing.
fn parse_concentration(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

/// Climate fields may be negative (temperatures); only humidity is
/// range-checked, out-of-range readings become missing.
fn parse_climate_value(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn wind_sector_index(code: &str) -> Result<u8> {
    WIND_SECTORS
        .iter()
        .position(|&s| s == code)
        .map(|i| i as u8)
        .ok_or_else(|| Error::UnknownWindDirection {
            got: code.to_string(),
        })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &str) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let got = headers.iter().collect::<Vec<_>>().join(",");
    if got != expected {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            got,
        });
    }
    Ok(())
}

/// Parse a pollutant CSV into one record per row.
///
/// Rejects out-of-range station ids and duplicate (station, hour) pairs;
/// unparseable value fields become missing rather than errors.
pub fn parse_pollutant_csv(path: impl AsRef<Path>) -> Result<Vec<PollutantRecord>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, POLLUTANT_HEADER)?;

    let mut seen: HashSet<(usize, NaiveDateTime)> = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let station: i64 = row[0].trim().parse().map_err(|_| Error::Csv {
            path: path.to_path_buf(),
            message: format!("bad station id `{}`", &row[0]),
        })?;
        if station < 0 || station as usize >= POLLUTANT_STATIONS {
            return Err(Error::StationOutOfRange {
                got: station,
                max: POLLUTANT_STATIONS - 1,
            });
        }
        let station = station as usize;
        let timestamp = parse_hour(&row[1])?;
        if !seen.insert((station, timestamp)) {
            return Err(Error::DuplicateRecord {
                key: format!("station {station}"),
                timestamp: format_hour(timestamp),
            });
        }
        records.push(PollutantRecord {
            station_id: station,
            timestamp,
            so2: parse_concentration(&row[2]),
            co: parse_concentration(&row[3]),
            no2: parse_concentration(&row[4]),
            o3: parse_concentration(&row[5]),
            pm10: parse_concentration(&row[6]),
            pm25: parse_concentration(&row[7]),
        });
    }
    Ok(records)
}

/// Parse a climate CSV into one record per row.
pub fn parse_climate_csv(path: impl AsRef<Path>) -> Result<Vec<ClimateRecord>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, CLIMATE_HEADER)?;

    let mut seen: HashSet<NaiveDateTime> = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let timestamp = parse_hour(&row[0])?;
        if !seen.insert(timestamp) {
            return Err(Error::DuplicateRecord {
                key: "climate".to_string(),
                timestamp: format_hour(timestamp),
            });
        }
        let dir = row[2].trim();
        let wind_direction = if dir.is_empty() {
            None
        } else {
            Some(wind_sector_index(dir)?)
        };
        let humidity = parse_climate_value(&row[3]).filter(|h| (0.0..=100.0).contains(h));
        records.push(ClimateRecord {
            timestamp,
            wind_speed: parse_climate_value(&row[1]),
            wind_direction,
            humidity,
            vapor_pressure: parse_climate_value(&row[4]),
            dew_point: parse_climate_value(&row[5]),
            surface_pressure: parse_climate_value(&row[6]),
            sunlight: parse_climate_value(&row[7]),
            visibility: parse_climate_value(&row[8]),
            surface_temp: parse_climate_value(&row[9]),
        });
    }
    Ok(records)
}

fn write_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, "{v}");
    }
}

/// Serialize pollutant records back to the ingest CSV schema.
///
/// Values use shortest round-trip float formatting, so parse → write → parse
/// is bit-exact.
pub fn write_pollutant_csv(path: impl AsRef<Path>, records: &[PollutantRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(POLLUTANT_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{}", r.station_id, format_hour(r.timestamp));
        for v in r.values() {
            out.push(',');
            write_opt(&mut out, v);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Serialize climate records back to the ingest CSV schema.
pub fn write_climate_csv(path: impl AsRef<Path>, records: &[ClimateRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(CLIMATE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format_hour(r.timestamp));
        out.push(',');
        write_opt(&mut out, r.wind_speed);
        out.push(',');
        if let Some(d) = r.wind_direction {
            out.push_str(WIND_SECTORS[d as usize]);
        }
        for v in [
            r.humidity,
            r.vapor_pressure,
            r.dew_point,
            r.surface_pressure,
            r.sunlight,
            r.visibility,
            r.surface_temp,
        ] {
            out.push(',');
            write_opt(&mut out, v);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Shift every timestamp by `hours` (used to normalize local-time sources to UTC).
pub fn shift_timestamps(
    pollutants: &mut [PollutantRecord],
    climate: &mut [ClimateRecord],
    hours: i64,
) {
    let delta = TimeDelta::hours(hours);
    for r in pollutants.iter_mut() {
        r.timestamp += delta;
    }
    for r in climate.iter_mut() {
        r.timestamp += delta;
    }
}

/// Smallest hour range `[start, end)` covering every record, if any exist.
pub fn hour_range(
    pollutants: &[PollutantRecord],
    climate: &[ClimateRecord],
) -> Option<(NaiveDateTime, NaiveDateTime)> {
    let stamps = pollutants
        .iter()
        .map(|r| r.timestamp)
        .chain(climate.iter().map(|r| r.timestamp));
    let (mut min, mut max) = (None, None);
    for ts in stamps {
        min = Some(min.map_or(ts, |m: NaiveDateTime| m.min(ts)));
        max = Some(max.map_or(ts, |m: NaiveDateTime| m.max(ts)));
    }
    Some((min?, max? + TimeDelta::hours(1)))
}

/// Lay records onto a contiguous hourly grid covering `[start, end)`.
///
/// Hours with no source record keep all their cells missing; records outside
/// the range are dropped. Fails if nothing at all lands inside the range.
pub fn align_hourly(
    pollutants: &[PollutantRecord],
    climate: &[ClimateRecord],
    start: NaiveDateTime,
    end: NaiveDateTime,
) -> Result<ObservationTable> {
    if end <= start {
        return Err(Error::EmptyHourRange {
            start: format_hour(start),
            end: format_hour(end),
        });
    }
    let n_hours = (end - start).num_hours() as usize;
    let mut values = Array2::from_elem((n_hours, FEATURE_DIM), f64::NAN);
    let imputed = Array2::from_elem((n_hours, FEATURE_DIM), false);

    let row_of = |ts: NaiveDateTime| -> Option<usize> {
        if ts < start || ts >= end {
            return None;
        }
        Some((ts - start).num_hours() as usize)
    };

    let mut placed = 0usize;
    for r in pollutants {
        let Some(row) = row_of(r.timestamp) else {
            continue;
        };
        placed += 1;
        for (elem, v) in r.values().into_iter().enumerate() {
            if let Some(v) = v {
                values[[row, pollutant_col(r.station_id, elem)]] = v;
            }
        }
    }
    for r in climate {
        let Some(row) = row_of(r.timestamp) else {
            continue;
        };
        placed += 1;
        for (var, v) in r.values().into_iter().enumerate() {
            if let Some(v) = v {
                values[[row, climate_col(var)]] = v;
            }
        }
    }
    if placed == 0 {
        return Err(Error::NoDataInRange);
    }
    Ok(ObservationTable {
        start,
        values,
        imputed,
    })
}

/// Fill every missing cell by linear interpolation between the nearest
/// present values in the same column, with flat fill at the series edges.
///
/// Observed cells are carried over untouched; the returned table's
/// imputation mask marks exactly the filled cells. A column with no present
/// value at all is an error.
pub fn impute_missing(table: &ObservationTable) -> Result<ObservationTable> {
    let n = table.n_hours();
    let mut values = table.values.clone();
    let mut imputed = table.imputed.clone();

    for col in 0..FEATURE_DIM {
        let present: Vec<usize> = (0..n).filter(|&r| !values[[r, col]].is_nan()).collect();
        if present.is_empty() {
            return Err(Error::AllMissing {
                column: column_name(col),
            });
        }
        for row in 0..n {
            if !values[[row, col]].is_nan() {
                continue;
            }
            let next = present.partition_point(|&p| p < row);
            let filled = match (next.checked_sub(1).map(|i| present[i]), present.get(next)) {
                (Some(prev), Some(&nxt)) => {
                    let (vp, vn) = (values[[prev, col]], values[[nxt, col]]);
                    vp + (vn - vp) * (row - prev) as f64 / (nxt - prev) as f64
                }
                (Some(prev), None) => values[[prev, col]],
                (None, Some(&nxt)) => values[[nxt, col]],
                (None, None) => unreachable!("present is non-empty"),
            };
            values[[row, col]] = filled;
            imputed[[row, col]] = true;
        }
    }
    debug_assert!(values.iter().all(|v| !v.is_nan()));
    Ok(ObservationTable {
        start: table.start,
        values,
        imputed,
    })
}

/// Build a table directly from in-memory records covering their full range.
pub fn table_from_records(
    pollutants: &[PollutantRecord],
    climate: &[ClimateRecord],
) -> Result<ObservationTable> {
    let (start, end) = hour_range(pollutants, climate).ok_or(Error::NoDataInRange)?;
    let aligned = align_hourly(pollutants, climate, start, end)?;
    impute_missing(&aligned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hour(s: &str) -> NaiveDateTime {
        parse_hour(s).unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_complete_pollutant_row() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n6,2017-03-17T00:00,0.004,0.5,0.031,0.012,81,54\n",
        );
        let records = parse_pollutant_csv(f.path()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.station_id, 6);
        assert_eq!(r.timestamp, hour("2017-03-17T00:00"));
        assert_eq!(
            r.values(),
            [
                Some(0.004),
                Some(0.5),
                Some(0.031),
                Some(0.012),
                Some(81.0),
                Some(54.0)
            ]
        );
    }

    #[test]
    fn empty_field_is_missing() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n6,2017-03-17T01:00,,0.5,0.031,0.012,81,54\n",
        );
        let r = &parse_pollutant_csv(f.path()).unwrap()[0];
        assert_eq!(r.so2, None);
        assert_eq!(r.co, Some(0.5));
    }

    #[test]
    fn unparseable_and_negative_fields_are_missing() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n6,2017-03-17T01:00,abc,-1,0.031,0.012,81,54\n",
        );
        let r = &parse_pollutant_csv(f.path()).unwrap()[0];
        assert_eq!(r.so2, None);
        assert_eq!(r.co, None);
        assert_eq!(r.no2, Some(0.031));
    }

    #[test]
    fn station_out_of_range_rejected() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n40,2017-03-17T00:00,0.004,0.5,0.031,0.012,81,54\n",
        );
        assert!(matches!(
            parse_pollutant_csv(f.path()),
            Err(Error::StationOutOfRange { got: 40, .. })
        ));
    }

    #[test]
    fn duplicate_station_hour_rejected() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n6,2017-03-17T00:00,,,,,81,54\n6,2017-03-17T00:00,,,,,82,55\n",
        );
        assert!(matches!(
            parse_pollutant_csv(f.path()),
            Err(Error::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn malformed_header_rejected() {
        let f = write_temp("station,when,so2,co,no2,o3,pm10,pm25\n");
        assert!(matches!(
            parse_pollutant_csv(f.path()),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_pollutant_csv("/nonexistent/p.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn off_hour_timestamp_rejected() {
        let f = write_temp(
            "station_id,timestamp,so2,co,no2,o3,pm10,pm25\n6,2017-03-17T00:30,,,,,81,54\n",
        );
        assert!(matches!(
            parse_pollutant_csv(f.path()),
            Err(Error::BadTimestamp { .. })
        ));
    }

    #[test]
    fn wind_sector_codes_follow_compass_order() {
        assert_eq!(wind_sector_index("N").unwrap(), 0);
        assert_eq!(wind_sector_index("E").unwrap(), 4);
        assert_eq!(wind_sector_index("S").unwrap(), 8);
        assert_eq!(wind_sector_index("SSW").unwrap(), 9);
        assert_eq!(wind_sector_index("NNW").unwrap(), 15);
        assert!(matches!(
            wind_sector_index("Q"),
            Err(Error::UnknownWindDirection { .. })
        ));
    }

    #[test]
    fn parses_climate_row() {
        let f = write_temp(
            "timestamp,wind_speed,wind_dir,humidity,vapor_pressure,dew_point,surface_pressure,sunlight,visibility,surface_temp\n2017-03-17T00:00,3.2,SSW,61,9.5,4.1,1013.2,0,11000,-8.5\n",
        );
        let r = &parse_climate_csv(f.path()).unwrap()[0];
        assert_eq!(r.wind_direction, Some(9));
        assert_eq!(r.surface_temp, Some(-8.5));
        assert_eq!(r.humidity, Some(61.0));
    }

    #[test]
    fn out_of_range_humidity_is_missing() {
        let f = write_temp(
            "timestamp,wind_speed,wind_dir,humidity,vapor_pressure,dew_point,surface_pressure,sunlight,visibility,surface_temp\n2017-03-17T00:00,3.2,N,140,9.5,4.1,1013.2,0,11000,2\n",
        );
        assert_eq!(parse_climate_csv(f.path()).unwrap()[0].humidity, None);
    }

    #[test]
    fn unknown_wind_code_rejected() {
        let f = write_temp(
            "timestamp,wind_speed,wind_dir,humidity,vapor_pressure,dew_point,surface_pressure,sunlight,visibility,surface_temp\n2017-03-17T00:00,3.2,Q,61,9.5,4.1,1013.2,0,11000,2\n",
        );
        assert!(matches!(
            parse_climate_csv(f.path()),
            Err(Error::UnknownWindDirection { .. })
        ));
    }

    fn full_hour_records(
        n_hours: usize,
        start: NaiveDateTime,
    ) -> (Vec<PollutantRecord>, Vec<ClimateRecord>) {
        let mut pollutants = Vec::new();
        let mut climate = Vec::new();
        for h in 0..n_hours {
            let ts = start + TimeDelta::hours(h as i64);
            for station in 0..POLLUTANT_STATIONS {
                pollutants.push(PollutantRecord {
                    station_id: station,
                    timestamp: ts,
                    so2: Some(0.004),
                    co: Some(0.5),
                    no2: Some(0.03),
                    o3: Some(0.01 + h as f64 * 1e-4),
                    pm10: Some(40.0 + station as f64),
                    pm25: Some(20.0 + h as f64),
                });
            }
            climate.push(ClimateRecord {
                timestamp: ts,
                wind_speed: Some(3.0),
                wind_direction: Some((h % 16) as u8),
                humidity: Some(60.0),
                vapor_pressure: Some(9.0),
                dew_point: Some(4.0),
                surface_pressure: Some(1013.0),
                sunlight: Some(0.5),
                visibility: Some(10000.0),
                surface_temp: Some(8.0),
            });
        }
        (pollutants, climate)
    }

    #[test]
    fn align_complete_data_has_no_missing_cells() {
        let start = hour("2017-03-01T00:00");
        let (p, c) = full_hour_records(48, start);
        let table = align_hourly(&p, &c, start, start + TimeDelta::hours(48)).unwrap();
        assert_eq!(table.n_hours(), 48);
        assert_eq!(table.missing_cells(), 0);
        assert_eq!(table.imputed_cells(), 0);
    }

    #[test]
    fn align_gap_leaves_missing_cells() {
        let start = hour("2017-03-01T00:00");
        let (mut p, c) = full_hour_records(48, start);
        let gap_ts = start + TimeDelta::hours(10);
        p.retain(|r| !(r.station_id == 3 && r.timestamp == gap_ts));
        let table = align_hourly(&p, &c, start, start + TimeDelta::hours(48)).unwrap();
        assert_eq!(table.missing_cells(), POLLUTANTS_PER_STATION);
        assert!(table.is_missing(10, pollutant_col(3, 0)));
        assert!(!table.is_missing(10, pollutant_col(4, 0)));
    }

    #[test]
    fn align_rejects_inverted_range() {
        let start = hour("2017-03-01T00:00");
        let (p, c) = full_hour_records(4, start);
        assert!(matches!(
            align_hourly(&p, &c, start, start),
            Err(Error::EmptyHourRange { .. })
        ));
    }

    #[test]
    fn align_rejects_disjoint_range() {
        let start = hour("2017-03-01T00:00");
        let (p, c) = full_hour_records(4, start);
        let far = hour("2020-01-01T00:00");
        assert!(matches!(
            align_hourly(&p, &c, far, far + TimeDelta::hours(4)),
            Err(Error::NoDataInRange)
        ));
    }

    /// Tiny hand-built table: one climate-only grid with chosen column values.
    fn gap_fixture(col_values: &[Option<f64>]) -> ObservationTable {
        let start = hour("2017-03-01T00:00");
        let n = col_values.len();
        let mut values = Array2::from_elem((n, FEATURE_DIM), 1.0);
        for (row, v) in col_values.iter().enumerate() {
            values[[row, 0]] = v.unwrap_or(f64::NAN);
        }
        ObservationTable {
            start,
            values,
            imputed: Array2::from_elem((n, FEATURE_DIM), false),
        }
    }

    #[test]
    fn impute_linear_midpoint() {
        let table = gap_fixture(&[Some(10.0), None, Some(30.0)]);
        let filled = impute_missing(&table).unwrap();
        assert_eq!(filled.value(1, 0), 20.0);
        assert!(filled.is_imputed(1, 0));
        assert!(!filled.is_imputed(0, 0));
        assert_eq!(filled.value(0, 0), 10.0);
        assert_eq!(filled.missing_cells(), 0);
    }

    #[test]
    fn impute_edge_fill() {
        let table = gap_fixture(&[None, Some(5.0), Some(5.0)]);
        let filled = impute_missing(&table).unwrap();
        assert_eq!(filled.value(0, 0), 5.0);
        assert!(filled.is_imputed(0, 0));

        let table = gap_fixture(&[Some(7.0), Some(7.0), None]);
        let filled = impute_missing(&table).unwrap();
        assert_eq!(filled.value(2, 0), 7.0);
    }

    #[test]
    fn impute_all_missing_column_fails() {
        let table = gap_fixture(&[None, None, None]);
        match impute_missing(&table) {
            Err(Error::AllMissing { column }) => assert_eq!(column, "station0.so2"),
            other => panic!("expected AllMissing, got {other:?}"),
        }
    }

    #[test]
    fn impute_interpolates_across_long_gap() {
        let table = gap_fixture(&[Some(0.0), None, None, None, Some(8.0)]);
        let filled = impute_missing(&table).unwrap();
        assert_eq!(filled.value(1, 0), 2.0);
        assert_eq!(filled.value(2, 0), 4.0);
        assert_eq!(filled.value(3, 0), 6.0);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let start = hour("2017-03-01T00:00");
        let (mut p, mut c) = full_hour_records(5, start);
        p[3].so2 = None;
        p[7].pm10 = Some(0.1 + 0.2); // deliberately non-representable sum
        c[2].wind_direction = None;
        c[4].dew_point = Some(-3.7);

        let dir = tempfile::tempdir().unwrap();
        let p_path = dir.path().join("p.csv");
        let c_path = dir.path().join("c.csv");
        write_pollutant_csv(&p_path, &p).unwrap();
        write_climate_csv(&c_path, &c).unwrap();
        assert_eq!(parse_pollutant_csv(&p_path).unwrap(), p);
        assert_eq!(parse_climate_csv(&c_path).unwrap(), c);
    }

    #[test]
    fn shift_applies_to_all_records() {
        let start = hour("2017-03-01T00:00");
        let (mut p, mut c) = full_hour_records(2, start);
        shift_timestamps(&mut p, &mut c, -9);
        assert_eq!(p[0].timestamp, hour("2017-02-28T15:00"));
        assert_eq!(c[0].timestamp, hour("2017-02-28T15:00"));
    }
}
