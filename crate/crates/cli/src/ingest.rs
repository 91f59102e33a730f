//! CSV ingestion and the rate-of-change-of-frequency transform.

use std::path::Path;

use multiscale::{Error, Result, TimeSeriesF64};

/// A value column with the matching timestamps, if a time column was named.
#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub series: TimeSeriesF64,
    pub times: Option<Vec<String>>,
}

impl Ingested {
    /// Timestamp of 1-based sample `k`.
    pub fn time(&self, k: usize) -> Option<&str> {
        self.times
            .as_ref()
            .and_then(|t| t.get(k.checked_sub(1)?))
            .map(String::as_str)
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| {
            let available: Vec<&str> = headers.iter().map(str::trim).collect();
            Error::InvalidInput(format!(
                "column '{name}' not found; available columns: {}",
                available.join(", ")
            ))
        })
}

/// Reads `column` (and optionally `time_column`) from a headed CSV file.
/// Line numbers in errors count the header as line 1.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    column: &str,
    time_column: Option<&str>,
    delimiter: u8,
) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let col = column_index(&headers, column)?;
    let tcol = time_column.map(|t| column_index(&headers, t)).transpose()?;
    let mut values = Vec::new();
    let mut times = tcol.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = record.get(col).ok_or_else(|| Error::Parse {
            line,
            message: format!("row has no column '{column}'"),
        })?;
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            line,
            message: format!("'{cell}' in column '{column}' is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("'{cell}' in column '{column}' is not finite"),
            });
        }
        values.push(v);
        if let (Some(t), Some(tc)) = (times.as_mut(), tcol) {
            t.push(record.get(tc).unwrap_or_default().to_string());
        }
    }
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{} has {} data rows; at least 2 are needed",
            path.display(),
            values.len()
        )));
    }
    Ok(Ingested {
        series: TimeSeriesF64::new(values)?,
        times,
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// `y_t = |f_t - f_{t-1}|`, one sample shorter than the input.
pub fn rocof_transform(s: &TimeSeriesF64) -> Result<TimeSeriesF64> {
    if s.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "RoCoF transform needs at least 3 samples, got {}",
            s.len()
        )));
    }
    TimeSeriesF64::new(s.values().windows(2).map(|w| (w[1] - w[0]).abs()).collect())
}

/// [`rocof_transform`] keeping the timestamp of the later sample of each pair.
pub fn rocof_ingested(data: &Ingested) -> Result<Ingested> {
    Ok(Ingested {
        series: rocof_transform(&data.series)?,
        times: data.times.as_ref().map(|t| t[1..].to_vec()),
    })
}
