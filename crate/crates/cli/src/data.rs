//! Numeric CSV ingestion.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use kgauss::embeddings::Sample;

use crate::CliError;

/// Parse a `--delim` value: a single byte, or `tab`/`\t`.
pub fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character or `tab`, got `{s}`")),
    }
}

/// Read one observation per row. A first row with no numeric field is taken
/// as a header.
pub fn read_sample(path: &Path, delimiter: u8) -> Result<Sample, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("{}: cannot open: {e}", path.display())))?;
    parse_sample(file, delimiter, &path.display().to_string())
}

pub fn parse_sample<R: Read>(input: R, delimiter: u8, name: &str) -> Result<Sample, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(delimiter)
        .from_reader(input);

    let mut data = Vec::new();
    let mut dim = None;
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{name}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if first {
            first = false;
            if rec.iter().all(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        match dim {
            None => dim = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(CliError::data(format!(
                    "{name}: line {line}: expected {d} columns, found {}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::data(format!(
                    "{name}: line {line}, column {}: `{field}` is not a number",
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!(
                    "{name}: line {line}, column {}: non-finite value `{field}`",
                    col + 1
                )));
            }
            data.push(v);
        }
    }
    let dim = dim.ok_or_else(|| CliError::data(format!("{name}: no data rows")))?;
    Sample::new(data, dim).map_err(|e| CliError::data(format!("{name}: {e}")))
}
