//! CSV ingestion and emission.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kernel::Sample;

/// Time-ordered samples read from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Sample>,
    pub dim: usize,
    pub header: Option<Vec<String>>,
    pub source: PathBuf,
}

/// Reads a comma-separated file with one sample per row. A first row whose
/// fields are all non-numeric is taken as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

/// Parses CSV text; `source` is used only in error messages.
pub fn parse_csv(text: &str, source: impl AsRef<Path>) -> Result<Dataset> {
    let source = source.as_ref().to_path_buf();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut header = None;
    let mut dim = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse::<f64>().ok()).collect();
        if rows.is_empty() && header.is_none() && parsed.iter().all(Option::is_none) {
            header = Some(record.iter().map(str::to_owned).collect());
            dim = Some(record.len());
            continue;
        }
        let d = *dim.get_or_insert(record.len());
        if record.len() != d {
            return Err(parse_err(line, format!("expected {d} fields, found {}", record.len())));
        }
        let mut values = Vec::with_capacity(d);
        for (col, (field, v)) in record.iter().zip(parsed).enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => return Err(parse_err(line, format!("column {}: non-finite value {field:?}", col + 1))),
                None => return Err(parse_err(line, format!("column {}: non-numeric value {field:?}", col + 1))),
            }
        }
        rows.push(Sample::new(values)?);
    }
    let dim = dim.ok_or_else(|| parse_err(0, "no data rows".into()))?;
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    Ok(Dataset {
        rows,
        dim,
        header,
        source,
    })
}

/// Fixed-width float formatting: 17 significant digits, exact round trip.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes samples one per row, without a header.
pub fn write_samples(path: impl AsRef<Path>, rows: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_samples_to(&mut w, rows).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples_to(w: &mut impl Write, rows: &[Sample]) -> std::io::Result<()> {
    for s in rows {
        let line: Vec<String> = s.iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes an indexed two-column series with a header row.
pub fn write_series(path: impl AsRef<Path>, columns: [&str; 2], series: &[(usize, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_series_to(&mut w, columns, series).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_series_to(w: &mut impl Write, columns: [&str; 2], series: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(w, "{},{}", columns[0], columns[1])?;
    for (i, v) in series {
        writeln!(w, "{i},{}", format_float(*v))?;
    }
    Ok(())
}

/// Writes text to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}
