//! Featurization: per-type min-max scaling into `[0, 1]`, feature-vector
//! assembly in fixed column order, and 48-hour window construction.
//!
//! Normalization is pooled per variable *type*: one min/max pair covers e.g.
//! all 39 stations' PM10 readings. Wind direction is the exception; its
//! sector index maps linearly as `d / 15`.

use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDateTime;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::ingest::{pollutant_col, ObservationTable, CLIMATE_NAMES, POLLUTANT_NAMES};
use crate::{CLIMATE_VARS, FEATURE_DIM, POLLUTANTS_PER_STATION, POLLUTANT_STATIONS};

/// Distinct variable types: 6 pollutant + 9 climate.
pub const VARIABLE_TYPES: usize = POLLUTANTS_PER_STATION + CLIMATE_VARS;

/// Type indices of the two regression targets and of wind direction.
pub const PM10_TYPE: usize = 4;
pub const PM25_TYPE: usize = 5;
pub const WIND_DIR_TYPE: usize = POLLUTANTS_PER_STATION + 1;

/// Variable type of a table/feature column.
pub fn column_type(col: usize) -> usize {
    let pollutant_cols = POLLUTANT_STATIONS * POLLUTANTS_PER_STATION;
    if col < pollutant_cols {
        col % POLLUTANTS_PER_STATION
    } else {
        POLLUTANTS_PER_STATION + (col - pollutant_cols)
    }
}

/// Canonical name of a variable type, used in the scaler file format.
pub fn type_name(ty: usize) -> &'static str {
    if ty < POLLUTANTS_PER_STATION {
        POLLUTANT_NAMES[ty]
    } else {
        CLIMATE_NAMES[ty - POLLUTANTS_PER_STATION]
    }
}

/// Fitted min-max statistics for one variable type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeRange {
    pub min: f64,
    pub max: f64,
}

impl TypeRange {
    /// A constant column type; transform maps such values to 0.
    pub fn is_degenerate(&self) -> bool {
        self.min == self.max
    }
}

/// Per-type min-max normalization statistics, fitted from training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    ranges: [TypeRange; VARIABLE_TYPES],
}

const SCALER_MAGIC: &str = "dustcast-scaler v1";

/// Compute per-type min/max over every station and hour of `table`.
///
/// The caller is responsible for passing only training rows (see
/// [`prepare_station_dataset`] for the leakage-safe composition).
pub fn fit_scaler(table: &ObservationTable) -> Result<Scaler> {
    if table.n_hours() == 0 {
        return Err(Error::EmptyTable);
    }
    let mut ranges = [TypeRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    }; VARIABLE_TYPES];
    for col in 0..FEATURE_DIM {
        let ty = column_type(col);
        for row in 0..table.n_hours() {
            let v = table.value(row, col);
            if v.is_nan() {
                return Err(Error::NonFinite {
                    context: format!("scaler input at row {row}, column {col}"),
                });
            }
            ranges[ty].min = ranges[ty].min.min(v);
            ranges[ty].max = ranges[ty].max.max(v);
        }
    }
    Ok(Scaler { ranges })
}

impl Scaler {
    pub fn range(&self, ty: usize) -> TypeRange {
        self.ranges[ty]
    }

    /// Map a raw value of type `ty` into `[0, 1]`.
    ///
    /// Values outside the fitted range clamp to the interval edges; a
    /// degenerate type maps to 0; wind direction maps as sector / 15.
    pub fn transform_value(&self, ty: usize, v: f64) -> f64 {
        if ty == WIND_DIR_TYPE {
            return (v / 15.0).clamp(0.0, 1.0);
        }
        let r = self.ranges[ty];
        if r.is_degenerate() {
            return 0.0;
        }
        ((v - r.min) / (r.max - r.min)).clamp(0.0, 1.0)
    }

    /// Transform a whole table into the feature matrix (one row per hour,
    /// columns in the fixed 243-wide order).
    pub fn transform(&self, table: &ObservationTable) -> Array2<f64> {
        let mut out = table.values().clone();
        for (col, mut column) in out.axis_iter_mut(Axis(1)).enumerate() {
            let ty = column_type(col);
            column.mapv_inplace(|v| self.transform_value(ty, v));
        }
        out
    }

    /// Normalized (PM10, PM2.5) of `station_id` at table row `row`.
    pub fn target_at(&self, table: &ObservationTable, station_id: usize, row: usize) -> (f64, f64) {
        let pm10 = table.value(row, pollutant_col(station_id, PM10_TYPE));
        let pm25 = table.value(row, pollutant_col(station_id, PM25_TYPE));
        (
            self.transform_value(PM10_TYPE, pm10),
            self.transform_value(PM25_TYPE, pm25),
        )
    }

    /// Exact affine inverse of the PM10/PM2.5 scaling, back to µg/m³.
    pub fn invert_target(&self, pm10_norm: f64, pm25_norm: f64) -> Result<(f64, f64)> {
        let inv = |ty: usize, v: f64| -> Result<f64> {
            let r = self.ranges[ty];
            if r.is_degenerate() {
                return Err(Error::DegenerateType(type_name(ty).to_string()));
            }
            Ok(r.min + v * (r.max - r.min))
        };
        Ok((inv(PM10_TYPE, pm10_norm)?, inv(PM25_TYPE, pm25_norm)?))
    }

    /// Write the flat `name min max` key-value format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from(SCALER_MAGIC);
        out.push('\n');
        for (ty, r) in self.ranges.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", type_name(ty), r.min, r.max));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scaler> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fail = |message: String| Error::ScalerFile {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(SCALER_MAGIC) {
            return Err(fail(format!("missing `{SCALER_MAGIC}` header")));
        }
        let mut ranges = [TypeRange { min: 0.0, max: 0.0 }; VARIABLE_TYPES];
        for ty in 0..VARIABLE_TYPES {
            let line = lines
                .next()
                .ok_or_else(|| fail(format!("truncated at type {}", type_name(ty))))?;
            let mut parts = line.split_whitespace();
            let name = parts.next().unwrap_or("");
            if name != type_name(ty) {
                return Err(fail(format!(
                    "expected type `{}`, got `{name}`",
                    type_name(ty)
                )));
            }
            let mut num = || -> Result<f64> {
                parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail(format!("bad numbers for `{name}`")))
            };
            let (min, max) = (num()?, num()?);
            if max < min {
                return Err(fail(format!("inverted range for `{name}`")));
            }
            ranges[ty] = TypeRange { min, max };
        }
        Ok(Scaler { ranges })
    }
}

/// Sliding-window samples over a normalized feature series.
///
/// Sample `k` pairs the `window` consecutive feature rows starting at hour
/// `k` with the target station's normalized (PM10, PM2.5) at hour
/// `k + window`; logically the inputs form an (N, window, 243) array, stored
/// as views into one shared feature matrix.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    features: Arc<Array2<f64>>,
    window: usize,
    station_id: usize,
    starts: Vec<usize>,
    targets: Array2<f64>,
    timestamps: Vec<NaiveDateTime>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn station_id(&self) -> usize {
        self.station_id
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Input window of sample `k`, shape (window, 243).
    pub fn input(&self, k: usize) -> ArrayView2<'_, f64> {
        let start = self.starts[k];
        self.features
            .slice(ndarray::s![start..start + self.window, ..])
    }

    /// Target of sample `k`, shape (2,).
    pub fn target(&self, k: usize) -> ArrayView1<'_, f64> {
        self.targets.row(k)
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    /// Hour the sample predicts.
    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        self.timestamps[k]
    }

    pub(crate) fn subset(&self, range: Range<usize>) -> WindowedDataset {
        WindowedDataset {
            features: Arc::clone(&self.features),
            window: self.window,
            station_id: self.station_id,
            starts: self.starts[range.clone()].to_vec(),
            targets: self.targets.slice(ndarray::s![range.clone(), ..]).to_owned(),
            timestamps: self.timestamps[range].to_vec(),
        }
    }
}

/// Cut a normalized feature series into windowed samples for one station.
///
/// `features` must align row-for-row with `table`; a series of L hours
/// yields exactly `L - window` samples, in chronological order.
pub fn make_windows(
    features: Array2<f64>,
    table: &ObservationTable,
    station_id: usize,
    window: usize,
) -> Result<WindowedDataset> {
    if features.ncols() != FEATURE_DIM || features.nrows() != table.n_hours() {
        return Err(Error::ShapeMismatch {
            context: "make_windows".into(),
            expected: format!("({}, {FEATURE_DIM})", table.n_hours()),
            got: format!("({}, {})", features.nrows(), features.ncols()),
        });
    }
    if station_id >= POLLUTANT_STATIONS {
        return Err(Error::StationOutOfRange {
            got: station_id as i64,
            max: POLLUTANT_STATIONS - 1,
        });
    }
    let len = features.nrows();
    if len <= window {
        return Err(Error::SeriesTooShort { len, window });
    }
    let n_samples = len - window;
    let pm10_col = pollutant_col(station_id, PM10_TYPE);
    let pm25_col = pollutant_col(station_id, PM25_TYPE);
    let mut targets = Array2::zeros((n_samples, 2));
    let mut timestamps = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        targets[[k, 0]] = features[[k + window, pm10_col]];
        targets[[k, 1]] = features[[k + window, pm25_col]];
        timestamps.push(table.timestamp(k + window));
    }
    Ok(WindowedDataset {
        features: Arc::new(features),
        window,
        station_id,
        starts: (0..n_samples).collect(),
        targets,
        timestamps,
    })
}

/// Chronological three-way split container.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

/// Split samples chronologically: earliest to train, then val, then test.
///
/// Train and val sizes floor; the remainder goes to test. Every partition
/// must end up non-empty.
pub fn split_dataset(
    ds: &WindowedDataset,
    train_frac: f64,
    val_frac: f64,
) -> Result<DatasetSplits> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::BadSplitFractions {
            train: train_frac,
            val: val_frac,
        });
    }
    let n = ds.len();
    let n_train = (n as f64 * train_frac).floor() as usize;
    let n_val = (n as f64 * val_frac).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::EmptyPartition {
            train: n_train,
            val: n_val,
            test: n_test,
        });
    }
    Ok(DatasetSplits {
        train: ds.subset(0..n_train),
        val: ds.subset(n_train..n_train + n_val),
        test: ds.subset(n_train + n_val..n),
    })
}

/// Number of training *samples* a table yields under this split, used to
/// bound the rows the scaler may see.
fn train_sample_count(n_samples: usize, train_frac: f64) -> usize {
    (n_samples as f64 * train_frac).floor() as usize
}

/// Leakage-safe end-to-end featurization for one station.
///
/// Fits the scaler on exactly the hours covered by training windows
/// (inputs and targets), then transforms the full series and splits it.
pub fn prepare_station_dataset(
    table: &ObservationTable,
    station_id: usize,
    window: usize,
    train_frac: f64,
    val_frac: f64,
) -> Result<(Scaler, DatasetSplits)> {
    let len = table.n_hours();
    if len <= window {
        return Err(Error::SeriesTooShort { len, window });
    }
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::BadSplitFractions {
            train: train_frac,
            val: val_frac,
        });
    }
    let n_samples = len - window;
    let n_train = train_sample_count(n_samples, train_frac);
    if n_train == 0 {
        return Err(Error::EmptyPartition {
            train: 0,
            val: 0,
            test: 0,
        });
    }
    let scaler = fit_scaler(&table.slice_rows(0..n_train + window))?;
    let features = scaler.transform(table);
    let ds = make_windows(features, table, station_id, window)?;
    let splits = split_dataset(&ds, train_frac, val_frac)?;
    Ok((scaler, splits))
}
