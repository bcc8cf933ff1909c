//! Plain-text disturbance trace files.
//!
//! Format: one sample per line. Lines starting with `#` are comments;
//! `# key = value` lines carry metadata (`units`, `interval_s`). A line may
//! be either `value` or `timestamp value` (whitespace- or comma-separated);
//! timestamps are ignored (the declared interval governs resampling).

use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub samples: Vec<f64>,
    /// Sampling interval declared in the header, seconds (default 1.0).
    pub interval_s: f64,
    pub units: Option<String>,
}

pub fn read_trace_file(path: &Path) -> Result<ParsedTrace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace, String> {
    let mut samples = Vec::new();
    let mut interval_s = 1.0;
    let mut units = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                match key.trim() {
                    "interval_s" => {
                        interval_s = value
                            .trim()
                            .parse()
                            .map_err(|_| format!("line {}: bad interval_s", lineno + 1))?;
                    }
                    "units" => units = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split([',', ' ', '\t']).filter(|f| !f.is_empty()).collect();
        let value_field = match fields.len() {
            1 => fields[0],
            2 => fields[1], // first field is a timestamp
            _ => return Err(format!("line {}: expected 1 or 2 fields", lineno + 1)),
        };
        let value: f64 = value_field
            .parse()
            .map_err(|_| format!("line {}: non-numeric sample '{value_field}'", lineno + 1))?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err("trace contains no samples".to_string());
    }
    if !(interval_s > 0.0) {
        return Err("interval_s must be > 0".to_string());
    }
    Ok(ParsedTrace {
        samples,
        interval_s,
        units,
    })
}

pub fn write_trace_file(
    path: &Path,
    samples: &[f64],
    interval_s: f64,
    units: &str,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&format!("# units = {units}\n# interval_s = {interval_s}\n"));
    for s in samples {
        out.push_str(&format!("{s:.9}\n"));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_headers_and_samples() {
        let t = parse_trace("# units = MW\n# interval_s = 0.5\n1.0\n2.5\n\n3.0\n").unwrap();
        assert_eq!(t.samples, vec![1.0, 2.5, 3.0]);
        assert_eq!(t.interval_s, 0.5);
        assert_eq!(t.units.as_deref(), Some("MW"));
    }

    #[test]
    fn parses_timestamped_rows() {
        let t = parse_trace("0.0, 1.5\n1.0, 2.5\n").unwrap();
        assert_eq!(t.samples, vec![1.5, 2.5]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_trace("abc\n").is_err());
        assert!(parse_trace("").is_err());
        assert!(parse_trace("1 2 3\n").is_err());
    }
}
