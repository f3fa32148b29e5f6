//! JSON serialisation shared by every machine-readable output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which is enough
//! for every finite `f64` to parse back to the identical bit pattern.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Result, RiskError};

/// Version tag carried by every JSON document.
pub const SCHEMA: &str = "riskcore/1";

/// Accepts a missing schema field or the current one.
pub fn check_schema(schema: Option<&str>) -> Result<()> {
    match schema {
        None => Ok(()),
        Some(s) if s == SCHEMA => Ok(()),
        Some(other) => Err(RiskError::InvalidConfig(format!("unsupported schema {other:?}, expected {SCHEMA:?}"))),
    }
}

/// Compact formatter that prints floats at 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct SigDigitsFormatter;

impl Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// `{:.16e}` rendering of a finite float.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serialises `value` as compact JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter);
    value.serialize(&mut ser).expect("serialising into memory cannot fail");
    // CompactFormatter output of serde_json is always UTF-8
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
