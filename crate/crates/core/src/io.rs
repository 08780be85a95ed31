//! Dataset files.
//!
//! CSV files carry a header `label,c1,...,cK` (confidences) or
//! `label,l1,...,lK` (logits), one sample per row, 1-based labels. The JSON
//! variant is the serde form of [`PredictionDataset`]:
//! `{"n_classes": K, "labels": [...], "confidences": [[...]], "logits": [[...]]}`
//! where either `confidences` or `logits` may be omitted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{CalibError, Result};
use crate::simplex::{ConfidenceVector, PredictionDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    LogitsCsv,
    Json,
}

impl DatasetFormat {
    /// `.json` files are JSON; everything else is read as a confidence CSV
    /// unless `logits` is set.
    pub fn infer(path: &Path, logits: bool) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ if logits => Self::LogitsCsv,
            _ => Self::Csv,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "logits-csv" => Ok(Self::LogitsCsv),
            "json" => Ok(Self::Json),
            _ => Err(CalibError::UnknownName {
                kind: "dataset format",
                value: s.into(),
                expected: "csv, logits-csv, json",
            }),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<PredictionDataset> {
    let file = File::open(path.as_ref())?;
    read_dataset(BufReader::new(file), format)
}

pub fn save_dataset(
    dataset: &PredictionDataset,
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_dataset(dataset, &mut out, format)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R, format: DatasetFormat) -> Result<PredictionDataset> {
    match format {
        DatasetFormat::Json => Ok(serde_json::from_reader(reader)?),
        DatasetFormat::Csv => read_csv(reader, 'c'),
        DatasetFormat::LogitsCsv => read_csv(reader, 'l'),
    }
}

pub fn write_dataset<W: Write>(
    dataset: &PredictionDataset,
    writer: W,
    format: DatasetFormat,
) -> Result<()> {
    match format {
        DatasetFormat::Json => {
            serde_json::to_writer(writer, dataset)?;
            Ok(())
        }
        DatasetFormat::Csv => {
            let rows = dataset.confidences().iter().map(|c| c.as_slice());
            write_csv(writer, 'c', dataset, rows)
        }
        DatasetFormat::LogitsCsv => {
            let logits = dataset.logits().ok_or_else(|| {
                CalibError::InvalidArgument("dataset has no logits to write".into())
            })?;
            write_csv(writer, 'l', dataset, logits.iter().map(Vec::as_slice))
        }
    }
}

fn read_csv<R: Read>(reader: R, prefix: char) -> Result<PredictionDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n_classes = headers.len().saturating_sub(1);
    let header_ok = headers.get(0) == Some("label")
        && n_classes >= 2
        && headers
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, h)| h == format!("{prefix}{}", i + 1));
    if !header_ok {
        let cols: Vec<String> = (1..=n_classes.max(2))
            .map(|i| format!("{prefix}{i}"))
            .collect();
        return Err(CalibError::InvalidDataset(format!(
            "expected header 'label,{}', got '{}'",
            cols.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let row_err = |message: String| CalibError::InvalidRow { row, message };
        if record.len() != n_classes + 1 {
            return Err(row_err(format!(
                "{} fields, expected {}",
                record.len(),
                n_classes + 1
            )));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| row_err(format!("label '{}' is not a class index", &record[0])))?;
        if !(1..=n_classes).contains(&label) {
            return Err(row_err(format!("label {label} outside 1..={n_classes}")));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| row_err(format!("'{f}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        labels.push(label);
        rows.push(values);
    }
    if labels.is_empty() {
        return Err(CalibError::InvalidDataset("no data rows".into()));
    }

    if prefix == 'l' {
        return PredictionDataset::from_logits(n_classes, labels, rows);
    }
    let confidences = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            ConfidenceVector::normalized(r).map_err(|e| CalibError::InvalidRow {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionDataset::new(n_classes, labels, confidences)
}

fn write_csv<'a, W: Write>(
    writer: W,
    prefix: char,
    dataset: &PredictionDataset,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((1..=dataset.n_classes()).map(|i| format!("{prefix}{i}")));
    wtr.write_record(&header)?;
    for (&y, row) in dataset.labels().iter().zip(rows) {
        let mut record = Vec::with_capacity(row.len() + 1);
        record.push(y.to_string());
        // `Display` for f64 prints the shortest string that parses back to
        // the same value.
        record.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
