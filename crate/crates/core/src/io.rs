//! CSV/JSON ingestion and artifact emission.

use crate::error::{Error, Result};
use crate::grid::CopulaGrid;
use crate::states::{GapCurve, StateModel};
use crate::timeseries::PriceMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop any ticker with missing cells and record a warning.
    #[default]
    DropTicker,
    /// Reject the file on the first missing cell.
    HardError,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    /// Tickers dropped because of missing cells, with the first bad line.
    pub dropped: Vec<(String, usize)>,
}

/// Read a price panel: header `date,<ticker>...`, one row per trading day,
/// ISO-8601 dates, decimal prices. Empty cells follow `policy`.
pub fn read_prices_csv(path: &Path, policy: MissingPolicy) -> Result<(PriceMatrix, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("date") {
        return Err(Error::CsvParse {
            line: 1,
            msg: "header must start with 'date'".into(),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            msg: "no ticker columns".into(),
        });
    }
    let mut dates = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); tickers.len()];
    // first line with a missing cell, per ticker
    let mut missing_at: Vec<Option<usize>> = vec![None; tickers.len()];
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != tickers.len() + 1 {
            return Err(Error::CsvParse {
                line,
                msg: format!("expected {} fields, got {}", tickers.len() + 1, record.len()),
            });
        }
        let date = record.get(0).unwrap();
        if chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").is_err() {
            return Err(Error::CsvParse {
                line,
                msg: format!("invalid ISO-8601 date '{date}'"),
            });
        }
        dates.push(date.to_string());
        for (k, cell) in record.iter().skip(1).enumerate() {
            if cell.trim().is_empty() {
                match policy {
                    MissingPolicy::HardError => {
                        return Err(Error::MissingData(tickers[k].clone()));
                    }
                    MissingPolicy::DropTicker => {
                        missing_at[k].get_or_insert(line);
                        columns[k].push(f64::NAN);
                        continue;
                    }
                }
            }
            let value: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                line,
                msg: format!("ticker {}: unparseable price '{cell}'", tickers[k]),
            })?;
            columns[k].push(value);
        }
    }
    let mut kept_tickers = Vec::new();
    let mut kept_columns = Vec::new();
    let mut report = IngestReport::default();
    for (k, ticker) in tickers.into_iter().enumerate() {
        match missing_at[k] {
            Some(line) => {
                eprintln!("warning: dropping ticker {ticker}: missing cell at line {line}");
                report.dropped.push((ticker, line));
            }
            None => {
                kept_tickers.push(ticker);
                kept_columns.push(std::mem::take(&mut columns[k]));
            }
        }
    }
    if kept_tickers.is_empty() {
        return Err(Error::Precondition("every ticker was dropped".into()));
    }
    Ok((PriceMatrix::new(kept_tickers, dates, kept_columns)?, report))
}

/// Write a price panel in the same schema `read_prices_csv` consumes.
pub fn write_prices_csv(path: &Path, prices: &PriceMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(prices.tickers.iter().cloned());
    writer.write_record(&header)?;
    for (t, date) in prices.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(prices.values.iter().map(|col| format!("{:.10e}", col[t])));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Grid CSV: (u_bin_center, v_bin_center, density), B^2 rows.
pub fn write_grid_csv(path: &Path, grid: &CopulaGrid) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["u_bin_center", "v_bin_center", "density"])?;
    let w = grid.bin_width();
    for a in 0..grid.bins {
        for b in 0..grid.bins {
            writer.write_record([
                format!("{:.6}", (a as f64 + 0.5) * w),
                format!("{:.6}", (b as f64 + 0.5) * w),
                format!("{:.12e}", grid.at(a, b)),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reload a grid CSV and check the unit-mass invariant (empirical and
/// analytic grids alike), returning the reloaded mass.
pub fn validate_grid_csv(path: &Path, bins: usize, tol: f64) -> Result<f64> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut total = 0.0;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        let density: f64 = record
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CsvParse {
                line: rows + 2,
                msg: "bad density field".into(),
            })?;
        total += density;
        rows += 1;
    }
    if rows != bins * bins {
        return Err(Error::DimensionMismatch(format!(
            "grid file has {rows} rows, expected {}",
            bins * bins
        )));
    }
    let mass = total / (bins * bins) as f64;
    if (mass - 1.0).abs() > tol {
        return Err(Error::Precondition(format!(
            "reloaded grid mass {mass} violates unit normalization (tol {tol})"
        )));
    }
    Ok(mass)
}

/// Read a grid CSV written by `write_grid_csv`; the bin count is inferred
/// from the row count.
pub fn read_grid_csv(path: &Path, kind: crate::grid::GridKind) -> Result<CopulaGrid> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::CsvParse {
                    line: idx + 2,
                    msg: format!("bad field {i}"),
                })
        };
        rows.push((parse(0)?, parse(1)?, parse(2)?));
    }
    let bins = (rows.len() as f64).sqrt().round() as usize;
    if bins * bins != rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "grid file has {} rows, not a perfect square",
            rows.len()
        )));
    }
    let w = 1.0 / bins as f64;
    let mut density = vec![f64::NAN; bins * bins];
    for (u, v, d) in rows {
        let a = ((u / w - 0.5).round() as i64).clamp(0, bins as i64 - 1) as usize;
        let b = ((v / w - 0.5).round() as i64).clamp(0, bins as i64 - 1) as usize;
        density[a * bins + b] = d;
    }
    if density.iter().any(|d| d.is_nan()) {
        return Err(Error::Precondition("grid file does not cover all bins".into()));
    }
    CopulaGrid::new(bins, density, kind)
}

/// Gap curve CSV: (k, gap, s_k, W_k).
pub fn write_gap_csv(path: &Path, curve: &GapCurve) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["k", "gap", "s_k", "W_k"])?;
    for e in &curve.entries {
        writer.write_record([
            e.k.to_string(),
            format!("{:.12e}", e.gap),
            format!("{:.12e}", e.s_k),
            format!("{:.12e}", e.w_k),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Tail statistics CSV: one row per stock pair.
pub fn write_tail_csv(path: &Path, per_pair: &[(usize, usize, crate::empirical::TailStats)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["pair_k", "pair_l", "LL", "UL", "UU", "LU", "alpha", "beta"])?;
    for (k, l, s) in per_pair {
        writer.write_record([
            k.to_string(),
            l.to_string(),
            format!("{:.12e}", s.ll),
            format!("{:.12e}", s.ul),
            format!("{:.12e}", s.uu),
            format!("{:.12e}", s.lu),
            format!("{:.12e}", s.alpha),
            format!("{:.12e}", s.beta),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateModelFile {
    pub seed: u64,
    #[serde(flatten)]
    pub model: StateModel,
}

pub fn write_state_model_json(path: &Path, model: &StateModel, seed: u64) -> Result<()> {
    let file = StateModelFile {
        seed,
        model: model.clone(),
    };
    write_json(path, &file)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Window ground-truth labels: (window_index, regime_id).
pub fn write_window_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["window_index", "regime_id"])?;
    for (i, l) in labels.iter().enumerate() {
        writer.write_record([i.to_string(), l.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridKind;
    use crate::simulator::{simulate_market, RegimeSchedule, RegimeSegment};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn well_formed_file_round_trips() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,AAA,BBB,CCC\n\
             2001-01-01,10.0,20.0,30.0\n\
             2001-01-02,10.5,19.5,30.3\n\
             2001-01-03,10.2,19.9,30.1\n\
             2001-01-04,10.8,20.4,29.9\n\
             2001-01-05,11.0,20.8,29.5\n",
        )
        .unwrap();
        let (prices, report) = read_prices_csv(&path, MissingPolicy::DropTicker).unwrap();
        assert_eq!(prices.num_stocks(), 3);
        assert_eq!(prices.num_days(), 5);
        assert!(report.dropped.is_empty());
        assert_eq!(prices.values[1][0], 20.0);
    }

    #[test]
    fn negative_price_names_ticker_and_date() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "date,XYZ\n2001-01-01,5.0\n2001-01-02,-3.0\n").unwrap();
        let err = read_prices_csv(&path, MissingPolicy::DropTicker)
            .unwrap_err()
            .to_string();
        assert!(err.contains("XYZ") && err.contains("2001-01-02"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "date,A\n2001-01-01,1.0\n2001-01-02,oops\n").unwrap();
        let err = read_prices_csv(&path, MissingPolicy::DropTicker)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_date_rejected() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "date,A\n01/02/2001,1.0\n").unwrap();
        assert!(read_prices_csv(&path, MissingPolicy::DropTicker).is_err());
    }

    #[test]
    fn missing_cell_drops_ticker_or_errors() {
        let dir = tmp();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "date,A,B\n2001-01-01,1.0,2.0\n2001-01-02,,2.1\n2001-01-03,1.2,2.2\n",
        )
        .unwrap();
        let (prices, report) = read_prices_csv(&path, MissingPolicy::DropTicker).unwrap();
        assert_eq!(prices.tickers, vec!["B".to_string()]);
        assert_eq!(report.dropped, vec![("A".to_string(), 3)]);
        assert!(matches!(
            read_prices_csv(&path, MissingPolicy::HardError),
            Err(Error::MissingData(t)) if t == "A"
        ));
    }

    #[test]
    fn simulator_output_round_trips_exactly() {
        let schedule = RegimeSchedule {
            segments: vec![RegimeSegment {
                days: 50,
                c: 0.2,
                n: 8.0,
                vols: vec![0.01],
            }],
            num_stocks: 4,
            seed: 31,
        };
        let sim = simulate_market(&schedule).unwrap();
        let dir = tmp();
        let path = dir.path().join("sim.csv");
        write_prices_csv(&path, &sim.prices).unwrap();
        let (back, _) = read_prices_csv(&path, MissingPolicy::HardError).unwrap();
        assert_eq!(back.tickers, sim.prices.tickers);
        assert_eq!(back.dates, sim.prices.dates);
        // %.10e formatting is lossy in the last bits; returns must still be
        // recoverable to high precision
        for (a, b) in back.values.iter().flatten().zip(sim.prices.values.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn grid_csv_round_trip_validates_mass() {
        let dir = tmp();
        let path = dir.path().join("g.csv");
        let grid = CopulaGrid::new(20, vec![1.0; 400], GridKind::Analytic).unwrap();
        write_grid_csv(&path, &grid).unwrap();
        let mass = validate_grid_csv(&path, 20, 1e-9).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(validate_grid_csv(&path, 10, 1e-9).is_err());
        let back = read_grid_csv(&path, GridKind::Analytic).unwrap();
        assert_eq!(back.bins, 20);
        assert_eq!(back.density, grid.density);
    }

    #[test]
    fn unnormalized_grid_fails_validation() {
        let dir = tmp();
        let path = dir.path().join("g.csv");
        let grid = CopulaGrid::new(10, vec![2.0; 100], GridKind::Analytic).unwrap();
        write_grid_csv(&path, &grid).unwrap();
        assert!(validate_grid_csv(&path, 10, 1e-6).is_err());
    }

    #[test]
    fn state_model_json_round_trip() {
        let dir = tmp();
        let path = dir.path().join("m.json");
        let model = StateModel {
            k: 2,
            medoids: vec![3, 7],
            labels: vec![1, 1, 2, 1, 2],
            distance_name: crate::states::DISTANCE_NAME.into(),
        };
        write_state_model_json(&path, &model, 42).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: StateModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.model.labels, model.labels);
        assert_eq!(back.model.medoids, model.medoids);
    }
}
