//! Parsing of command-line inputs: sample files and inline or `@file` JSON.

use std::fs;
use std::io::{self, Read};

use serde::de::DeserializeOwned;
use serde_json::Value;

use riskcore::report::check_schema;
use riskcore::Sample;

/// Reads `path`, or standard input when `path` is `-`.
fn read_source(path: &str) -> Result<String, String> {
    if path == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).map_err(|e| format!("reading standard input: {e}"))?;
        Ok(text)
    } else {
        fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))
    }
}

/// One decimal per line. Blank lines are skipped and a non-numeric first
/// line is taken as a header.
pub fn parse_sample(text: &str) -> Result<Sample, String> {
    let mut values = Vec::new();
    let mut seen_line = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if !seen_line => {}
            Err(_) => return Err(format!("line {}: {line:?} is not a number", lineno + 1)),
        }
        seen_line = true;
    }
    Sample::new(values).map_err(|e| e.to_string())
}

pub fn read_sample(path: &str) -> Result<Sample, String> {
    parse_sample(&read_source(path)?)
}

/// Inline JSON, or the contents of a file when prefixed with `@`.
pub fn json_text(arg: &str) -> Result<String, String> {
    match arg.strip_prefix('@') {
        Some(path) => read_source(path),
        None => Ok(arg.to_string()),
    }
}

pub fn parse_json<T: DeserializeOwned>(arg: &str, what: &str) -> Result<T, String> {
    let text = json_text(arg)?;
    serde_json::from_str(&text).map_err(|e| format!("invalid {what} JSON: {e}"))
}

/// A bare array, or an object `{"schema": ..., "<key>": [...]}` as printed by
/// the `weights`, `decompose`, `compose` and `recover` subcommands.
pub fn parse_vector(arg: &str, key: &str) -> Result<Vec<f64>, String> {
    let value: Value = parse_json(arg, key)?;
    let inner = match value {
        Value::Object(mut map) => {
            let schema = match map.remove("schema") {
                None => None,
                Some(Value::String(s)) => Some(s),
                Some(other) => return Err(format!("schema must be a string, got {other}")),
            };
            check_schema(schema.as_deref()).map_err(|e| e.to_string())?;
            let inner = map.remove(key).ok_or_else(|| format!("{key} JSON object has no {key:?} field"))?;
            if let Some(extra) = map.keys().next() {
                return Err(format!("unknown field {extra:?} in {key} JSON"));
            }
            inner
        }
        other => other,
    };
    serde_json::from_value(inner).map_err(|e| format!("invalid {key} JSON: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_with_header_and_blank_lines() {
        let s = parse_sample("loss\n3\n\n-1\n 2.5 \n").unwrap();
        assert_eq!(s.values(), &[3.0, -1.0, 2.5]);
    }

    #[test]
    fn sample_rejects_late_garbage_and_non_finite() {
        assert!(parse_sample("1\nabc\n").unwrap_err().contains("line 2"));
        assert!(parse_sample("1\nNaN\n").is_err());
        assert!(parse_sample("header only\n").is_err());
    }

    #[test]
    fn seventeen_digit_values_round_trip() {
        let values = [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, -f64::MAX];
        let text: String = values.iter().map(|v| format!("{}\n", riskcore::report::format_f64(*v))).collect();
        assert_eq!(parse_sample(&text).unwrap().values(), &values);
    }

    #[test]
    fn vectors_bare_or_wrapped() {
        assert_eq!(parse_vector("[0.5,0.5]", "weights").unwrap(), vec![0.5, 0.5]);
        let wrapped = r#"{"schema":"riskcore/1","weights":[1.0]}"#;
        assert_eq!(parse_vector(wrapped, "weights").unwrap(), vec![1.0]);
        assert!(parse_vector(r#"{"weights":[1.0],"x":2}"#, "weights").is_err());
        assert!(parse_vector(r#"{"schema":"riskcore/9","weights":[1.0]}"#, "weights").is_err());
        assert!(parse_vector(r#"{"mixture":[1.0]}"#, "weights").is_err());
    }
}
