use std::path::Path;

use nalgebra::DVector;

use crate::error::CliError;

/// Reads a noise trace: one sample per row, `#` comment lines, optional header.
pub fn read_samples(path: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Runtime(format!("cannot read `{}`: {e}", path.display())))?;
    parse_samples(file, &path.display().to_string())
}

pub fn parse_samples(
    reader: impl std::io::Read,
    label: &str,
) -> Result<Vec<DVector<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut samples: Vec<DVector<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Runtime(format!("{label}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match values {
            Ok(v) => v,
            // The first non-comment row may be a header.
            Err(_) if i == 0 && samples.is_empty() => continue,
            Err(_) => {
                return Err(CliError::Runtime(format!(
                    "{label}: row {} is not numeric: `{}`",
                    i + 1,
                    record.iter().collect::<Vec<_>>().join(",")
                )))
            }
        };
        if let Some(first) = samples.first() {
            if first.len() != values.len() {
                return Err(CliError::Runtime(format!(
                    "{label}: row {} has {} columns, expected {}",
                    i + 1,
                    values.len(),
                    first.len()
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Runtime(format!(
                "{label}: row {} contains a non-finite value",
                i + 1
            )));
        }
        samples.push(DVector::from_vec(values));
    }
    if samples.is_empty() {
        return Err(CliError::Runtime(format!("{label}: no samples found")));
    }
    Ok(samples)
}
