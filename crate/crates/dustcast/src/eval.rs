//! Reporting surfaces: per-station test MSE in the 1e-5 table format, hourly
//! predicted-vs-truth day series, and a two-panel SVG rendering.
//!
//! MSE is reported in normalized units (the per-sample loss is the squared
//! L2 norm over both targets, averaged over samples); de-normalized RMSE in
//! µg/m³ rides along for interpretability.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::features::{Scaler, WindowedDataset, PM10_TYPE, PM25_TYPE};
use crate::ingest::{pollutant_col, ObservationTable};
use crate::net::LstmModel;

/// Test-split accuracy for one station.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub station_id: usize,
    /// Mean per-sample squared L2 loss, normalized units.
    pub test_mse: f64,
    /// √test_mse, normalized units.
    pub rmse: f64,
    pub pm10_mse: f64,
    pub pm25_mse: f64,
    /// Per-target RMSE mapped back through the scaler, µg/m³.
    pub pm10_rmse_ugm3: f64,
    pub pm25_rmse_ugm3: f64,
    pub n_samples: usize,
}

/// Evaluate a model over a test split.
///
/// The two per-target MSEs are computed separately and summed, so they add
/// up to `test_mse` exactly.
pub fn evaluate(model: &LstmModel, scaler: &Scaler, test: &WindowedDataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = test.len();
    let mut sum10 = 0.0;
    let mut sum25 = 0.0;
    for k in 0..n {
        let y = model.predict(test.input(k))?;
        let target = test.target(k);
        let d10 = y[0] - target[0];
        let d25 = y[1] - target[1];
        sum10 += d10 * d10;
        sum25 += d25 * d25;
    }
    let pm10_mse = sum10 / n as f64;
    let pm25_mse = sum25 / n as f64;
    let test_mse = pm10_mse + pm25_mse;
    let width = |ty: usize| {
        let r = scaler.range(ty);
        r.max - r.min
    };
    Ok(EvalReport {
        station_id: test.station_id(),
        test_mse,
        rmse: test_mse.sqrt(),
        pm10_mse,
        pm25_mse,
        pm10_rmse_ugm3: pm10_mse.sqrt() * width(PM10_TYPE),
        pm25_rmse_ugm3: pm25_mse.sqrt() * width(PM25_TYPE),
        n_samples: n,
    })
}

/// One hour of the day series. Normalized columns come from the scaler;
/// the `_ugm3` truth columns carry the table values untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub timestamp: NaiveDateTime,
    pub pm10_pred: f64,
    pub pm10_true: f64,
    pub pm25_pred: f64,
    pub pm25_true: f64,
    pub pm10_pred_ugm3: f64,
    pub pm10_true_ugm3: f64,
    pub pm25_pred_ugm3: f64,
    pub pm25_true_ugm3: f64,
}

/// Chronological predicted-vs-truth series for one exported day.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesExport {
    pub rows: Vec<SeriesRow>,
}

pub const SERIES_HEADER: &str = "timestamp,pm10_pred,pm10_true,pm25_pred,pm25_true,pm10_pred_ugm3,pm10_true_ugm3,pm25_pred_ugm3,pm25_true_ugm3";

impl SeriesExport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.timestamp.format("%Y-%m-%dT%H:%M"),
                r.pm10_pred,
                r.pm10_true,
                r.pm25_pred,
                r.pm25_true,
                r.pm10_pred_ugm3,
                r.pm10_true_ugm3,
                r.pm25_pred_ugm3,
                r.pm25_true_ugm3,
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<SeriesExport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fail = |message: String| Error::SeriesFile {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(SERIES_HEADER) {
            return Err(fail("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(fail(format!("line {}: expected 9 fields", lineno + 2)));
            }
            let timestamp = NaiveDateTime::parse_from_str(fields[0], "%Y-%m-%dT%H:%M")
                .map_err(|_| fail(format!("line {}: bad timestamp", lineno + 2)))?;
            let mut nums = [0.0; 8];
            for (i, field) in fields[1..].iter().enumerate() {
                nums[i] = field
                    .parse()
                    .map_err(|_| fail(format!("line {}: bad number `{field}`", lineno + 2)))?;
            }
            rows.push(SeriesRow {
                timestamp,
                pm10_pred: nums[0],
                pm10_true: nums[1],
                pm25_pred: nums[2],
                pm25_true: nums[3],
                pm10_pred_ugm3: nums[4],
                pm10_true_ugm3: nums[5],
                pm25_pred_ugm3: nums[6],
                pm25_true_ugm3: nums[7],
            });
        }
        Ok(SeriesExport { rows })
    }
}

/// Roll one-step-ahead predictions over every hour of `day`.
///
/// Each hour's input window holds the `window` true observations preceding
/// it (teacher forcing): predictions never feed later windows.
pub fn predict_series(
    model: &LstmModel,
    scaler: &Scaler,
    table: &ObservationTable,
    station_id: usize,
    day: NaiveDate,
    window: usize,
) -> Result<SeriesExport> {
    let day_start = day.and_hms_opt(0, 0, 0).expect("midnight");
    let first_row = table.row_of(day_start).ok_or_else(|| Error::DayNotCovered {
        day: day.to_string(),
    })?;
    if first_row < window {
        return Err(Error::InsufficientHistory {
            hour: day_start.format("%Y-%m-%dT%H:%M").to_string(),
            need: window,
            table_start: table.start().format("%Y-%m-%dT%H:%M").to_string(),
        });
    }
    if first_row + 24 > table.n_hours() {
        return Err(Error::DayNotCovered {
            day: day.to_string(),
        });
    }
    let features = scaler.transform(table);
    let mut rows = Vec::with_capacity(24);
    for h in 0..24 {
        let row = first_row + h;
        let input = features.slice(ndarray::s![row - window..row, ..]);
        let y = model.predict(input)?;
        let (true10_norm, true25_norm) = scaler.target_at(table, station_id, row);
        let (pred10_ugm3, pred25_ugm3) = scaler.invert_target(y[0], y[1])?;
        rows.push(SeriesRow {
            timestamp: table.timestamp(row),
            pm10_pred: y[0],
            pm10_true: true10_norm,
            pm25_pred: y[1],
            pm25_true: true25_norm,
            pm10_pred_ugm3: pred10_ugm3,
            pm10_true_ugm3: table.value(row, pollutant_col(station_id, PM10_TYPE)),
            pm25_pred_ugm3: pred25_ugm3,
            pm25_true_ugm3: table.value(row, pollutant_col(station_id, PM25_TYPE)),
        });
    }
    Ok(SeriesExport { rows })
}

/// CSV and aligned-text views of the per-station MSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRendering {
    pub csv: String,
    pub text: String,
}

/// Render per-station MSE sorted by station, in units of 1e-5 with two
/// decimals (an MSE of 3.040e-4 prints as `30.40`).
pub fn render_table(reports: &[EvalReport]) -> Result<TableRendering> {
    if reports.is_empty() {
        return Err(Error::NoReports);
    }
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.station_id);

    let mut csv = String::from("station,mse_1e5\n");
    for r in &sorted {
        let _ = writeln!(csv, "{},{:.2}", r.station_id, r.test_mse * 1e5);
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<10}{:>12}", "Station", "MSE (1e-5)");
    for r in &sorted {
        let _ = writeln!(text, "{:<10}{:>12.2}", r.station_id, r.test_mse * 1e5);
    }
    Ok(TableRendering { csv, text })
}

/// Parse the CSV rendering back into (station, mse_1e5) pairs.
pub fn parse_table_csv(csv: &str) -> Result<Vec<(usize, f64)>> {
    let fail = |message: String| Error::SeriesFile {
        path: "<table csv>".into(),
        message,
    };
    let mut lines = csv.lines();
    if lines.next() != Some("station,mse_1e5") {
        return Err(fail("unexpected header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (station, mse) = line
            .split_once(',')
            .ok_or_else(|| fail(format!("bad row `{line}`")))?;
        out.push((
            station
                .parse()
                .map_err(|_| fail(format!("bad station `{station}`")))?,
            mse.parse().map_err(|_| fail(format!("bad mse `{mse}`")))?,
        ));
    }
    Ok(out)
}

const SVG_WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 260.0;
const PANEL_GAP: f64 = 60.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_RIGHT: f64 = 30.0;

fn polyline(points: &[(f64, f64)], stroke: &str, dash: Option<&str>) -> String {
    let mut attr = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            attr.push(' ');
        }
        let _ = write!(attr, "{x:.2},{y:.2}");
    }
    let dash_attr = dash
        .map(|d| format!(" stroke-dasharray=\"{d}\""))
        .unwrap_or_default();
    format!(
        "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash_attr} points=\"{attr}\" />\n"
    )
}

fn panel(
    title: &str,
    top: f64,
    hours: &[NaiveDateTime],
    truth: &[f64],
    pred: &[f64],
) -> String {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let lo = truth
        .iter()
        .chain(pred.iter())
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = truth
        .iter()
        .chain(pred.iter())
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let pad = ((hi - lo) * 0.08).max(1e-6);
    let (lo, hi) = (lo - pad, hi + pad);
    let x_of = |i: usize| MARGIN_LEFT + plot_w * i as f64 / (hours.len() - 1).max(1) as f64;
    let y_of = |v: f64| top + PANEL_HEIGHT - PANEL_HEIGHT * (v - lo) / (hi - lo);

    let mut g = format!("<g class=\"panel\">\n");
    let _ = write!(
        g,
        "<text x=\"{MARGIN_LEFT}\" y=\"{:.2}\" font-size=\"14\" font-family=\"sans-serif\">{title} (normalized)</text>\n",
        top - 10.0
    );
    let _ = write!(
        g,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{top:.2}\" width=\"{plot_w:.2}\" height=\"{PANEL_HEIGHT}\" fill=\"none\" stroke=\"#999\" />\n"
    );
    // Hour-of-day ticks every three hours.
    for (i, ts) in hours.iter().enumerate() {
        use chrono::Timelike;
        if ts.hour() % 3 == 0 {
            let x = x_of(i);
            let _ = write!(
                g,
                "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"middle\">{:02}</text>\n",
                top + PANEL_HEIGHT + 16.0,
                ts.hour()
            );
        }
    }
    // Y range labels.
    let _ = write!(
        g,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"end\">{hi:.2}</text>\n",
        MARGIN_LEFT - 6.0,
        top + 10.0
    );
    let _ = write!(
        g,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"end\">{lo:.2}</text>\n",
        MARGIN_LEFT - 6.0,
        top + PANEL_HEIGHT
    );
    let truth_pts: Vec<(f64, f64)> = truth.iter().enumerate().map(|(i, &v)| (x_of(i), y_of(v))).collect();
    let pred_pts: Vec<(f64, f64)> = pred.iter().enumerate().map(|(i, &v)| (x_of(i), y_of(v))).collect();
    g.push_str(&polyline(&truth_pts, "#1f77b4", None));
    g.push_str(&polyline(&pred_pts, "#d62728", Some("5,3")));
    g.push_str("</g>\n");
    g
}

/// Render the two-panel (PM10 over PM2.5) predicted-vs-truth SVG.
///
/// Output is a pure function of the series, so identical inputs give
/// byte-identical files.
pub fn render_svg(series: &SeriesExport) -> Result<String> {
    if series.rows.is_empty() {
        return Err(Error::EmptySeries);
    }
    let hours: Vec<NaiveDateTime> = series.rows.iter().map(|r| r.timestamp).collect();
    let pm10_true: Vec<f64> = series.rows.iter().map(|r| r.pm10_true).collect();
    let pm10_pred: Vec<f64> = series.rows.iter().map(|r| r.pm10_pred).collect();
    let pm25_true: Vec<f64> = series.rows.iter().map(|r| r.pm25_true).collect();
    let pm25_pred: Vec<f64> = series.rows.iter().map(|r| r.pm25_pred).collect();

    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 60.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{height}\" viewBox=\"0 0 {SVG_WIDTH} {height}\">\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"20\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#1f77b4\">solid: observed</text>\n",
        SVG_WIDTH - 260.0
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"20\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#d62728\">dashed: predicted</text>\n",
        SVG_WIDTH - 140.0
    );
    svg.push_str(&panel("PM10", MARGIN_TOP, &hours, &pm10_true, &pm10_pred));
    svg.push_str(&panel(
        "PM2.5",
        MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP,
        &hours,
        &pm25_true,
        &pm25_pred,
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write the SVG rendering of `series` to `path`.
pub fn emit_plot(series: &SeriesExport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(series)?).map_err(|e| Error::io(path, e))
}
