//! On-disk formats: hourly series CSV, wide demand-profile CSV, posted
//! price tables, calibration summaries — plus crash-safe file writes for
//! resumable batch runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::storage::StorageCalibration;
use crate::taker::PriceSignal;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Write through a temporary sibling then rename, so an interrupted run
/// never leaves a half-written file for the resume pass to trip on.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(file_err(path))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(file_err(&tmp))?;
        f.write_all(bytes).map_err(file_err(&tmp))?;
        f.sync_all().map_err(file_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(file_err(path))
}

/// Read an hourly series from a `step,value` CSV (header optional).
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut series = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != 2 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 2 columns (step, value), got {}", record.len()),
            });
        }
        // A non-numeric first row is treated as the header.
        if i == 0 && record[0].parse::<f64>().is_err() {
            continue;
        }
        let step: usize = record[0].trim().parse().map_err(|_| IoError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("step {:?} is not an integer", &record[0]),
        })?;
        if step != series.len() {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("step {} out of order (expected {})", step, series.len()),
            });
        }
        let value: f64 = record[1].trim().parse().map_err(|_| IoError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("value {:?} is not a number", &record[1]),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("value {value} must be finite and nonnegative"),
            });
        }
        series.push(value);
    }
    Ok(series)
}

pub fn write_series_csv(path: &Path, series: &[f64]) -> Result<(), IoError> {
    let mut out = String::from("step,value\n");
    for (step, v) in series.iter().enumerate() {
        out.push_str(&format!("{step},{v}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// One region's demand decomposition over a horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WideProfile {
    pub inflexible: Vec<f64>,
    pub responsive: Vec<f64>,
    pub pv: Vec<f64>,
    /// Realized grid draw; absent on input files.
    pub flexible: Option<Vec<f64>>,
}

/// Read a wide profile CSV: `step,P_L,P_U,P_PV`.
pub fn read_wide_profile_csv(path: &Path) -> Result<WideProfile, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut profile = WideProfile::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != 4 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 4 columns (step, P_L, P_U, P_PV), got {}", record.len()),
            });
        }
        if i == 0 && record[0].parse::<f64>().is_err() {
            continue;
        }
        let cell = |k: usize| -> Result<f64, IoError> {
            let v: f64 = record[k].trim().parse().map_err(|_| IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("column {k} value {:?} is not a number", &record[k]),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(IoError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {k} value {v} must be finite and nonnegative"),
                });
            }
            Ok(v)
        };
        profile.inflexible.push(cell(1)?);
        profile.responsive.push(cell(2)?);
        profile.pv.push(cell(3)?);
    }
    Ok(profile)
}

/// Write a wide profile, appending the realized draw column when present:
/// `step,P_L,P_U,P_PV[,P_F]`.
pub fn write_wide_profile_csv(path: &Path, profile: &WideProfile) -> Result<(), IoError> {
    let mut out = String::new();
    match &profile.flexible {
        Some(flex) => {
            out.push_str("step,P_L,P_U,P_PV,P_F\n");
            for step in 0..profile.inflexible.len() {
                out.push_str(&format!(
                    "{step},{},{},{},{}\n",
                    profile.inflexible[step], profile.responsive[step], profile.pv[step],
                    flex[step],
                ));
            }
        }
        None => {
            out.push_str("step,P_L,P_U,P_PV\n");
            for step in 0..profile.inflexible.len() {
                out.push_str(&format!(
                    "{step},{},{},{}\n",
                    profile.inflexible[step], profile.responsive[step], profile.pv[step],
                ));
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Write a posted price table: `region,step,price`.
pub fn write_price_csv(path: &Path, signal: &PriceSignal) -> Result<(), IoError> {
    let mut out = String::from("region,step,price\n");
    for (region, series) in &signal.prices {
        for (step, p) in series.iter().enumerate() {
            out.push_str(&format!("{region},{step},{p}\n"));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Read a posted price table back into a signal.
pub fn read_price_csv(path: &Path) -> Result<PriceSignal, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut prices: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != 3 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 columns (region, step, price), got {}", record.len()),
            });
        }
        if i == 0 && record[2].parse::<f64>().is_err() {
            continue;
        }
        let region = record[0].trim().to_string();
        let step: usize = record[1].trim().parse().map_err(|_| IoError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("step {:?} is not an integer", &record[1]),
        })?;
        let price: f64 = record[2].trim().parse().map_err(|_| IoError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("price {:?} is not a number", &record[2]),
        })?;
        if !price.is_finite() || price < 0.0 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("price {price} must be finite and nonnegative"),
            });
        }
        let series = prices.entry(region).or_default();
        if step != series.len() {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("step {} out of order (expected {})", step, series.len()),
            });
        }
        series.push(price);
    }
    let steps = prices.values().map(|s| s.len()).max().unwrap_or(0);
    if let Some((region, series)) = prices.iter().find(|(_, s)| s.len() != steps) {
        return Err(IoError::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "region {region} has {} steps, others have {steps}",
                series.len()
            ),
        });
    }
    Ok(PriceSignal { steps, prices })
}

/// Write a calibration summary:
/// `aggregator,charge_cap,battery_loss,iterations,converged`.
pub fn write_calibration_csv(path: &Path, calibration: &StorageCalibration) -> Result<(), IoError> {
    let mut out = String::from("aggregator,charge_cap,battery_loss,iterations,converged\n");
    for (region, c) in &calibration.aggregators {
        out.push_str(&format!(
            "{region},{},{},{},{}\n",
            c.charge_cap, c.battery_loss, c.iterations, c.converged
        ));
    }
    atomic_write(path, out.as_bytes())
}
