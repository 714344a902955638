//! Conversion of raw CSV cell text into typed values, and back.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::column::Value;
use crate::error::{Error, Result};
use crate::kind::{FieldKind, ValueType, LEAKY_CODE};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Whole days since the epoch, flooring in UTC.
pub fn day_of(timestamp: f64) -> i64 {
    (timestamp / SECONDS_PER_DAY).floor() as i64
}

/// Parses `YYYY-MM-DD hh:mm:ss` or `YYYY-MM-DD` as UTC posix seconds.
pub fn parse_datetime(raw: &str) -> Option<f64> {
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.and_utc().timestamp() as f64);
    }
    // chrono accepts unpadded fields; insist on the fixed-width form
    if raw.len() == 10 {
        if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
        }
    }
    None
}

/// Renders posix seconds in the form [`parse_datetime`] reads back; midnight
/// renders as a bare date.
pub fn format_datetime(timestamp: f64) -> String {
    let secs = timestamp.floor();
    let nanos = ((timestamp - secs) * 1e9).round() as u32;
    match DateTime::from_timestamp(secs as i64, nanos.min(999_999_999)) {
        Some(dt) if nanos == 0 && (secs as i64).rem_euclid(86_400) == 0 => {
            dt.format("%Y-%m-%d").to_string()
        }
        Some(dt) if nanos == 0 => dt.format("%Y-%m-%d %H:%M:%S").to_string(),
        Some(dt) => dt.format("%Y-%m-%d %H:%M:%S%.f").to_string(),
        None => timestamp.to_string(),
    }
}

/// Result of converting one cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Converted {
    /// A value with its validity flag.
    Value {
        value: Value,
        valid: bool,
    },
    /// A datetime with its validity flag and day number.
    DateTime {
        seconds: f64,
        valid: bool,
        day: i64,
    },
    /// A categorical code, plus free text when the cell is outside the key.
    Category {
        code: i64,
        freetext: Option<String>,
    },
    Text(String),
}

fn parse_number(value_type: ValueType, raw: &str) -> Option<Value> {
    Some(match value_type {
        ValueType::Bool => match raw {
            "True" => Value::Bool(true),
            "False" => Value::Bool(false),
            _ => return None,
        },
        ValueType::Float32 | ValueType::Float64 => Value::Float(raw.parse().ok()?),
        ValueType::UInt8 => Value::UInt(raw.parse::<u8>().ok()? as u64),
        ValueType::UInt16 => Value::UInt(raw.parse::<u16>().ok()? as u64),
        ValueType::UInt32 => Value::UInt(raw.parse::<u32>().ok()? as u64),
        ValueType::UInt64 => Value::UInt(raw.parse::<u64>().ok()?),
        ValueType::Int8 => Value::Int(raw.parse::<i8>().ok()? as i64),
        ValueType::Int16 => Value::Int(raw.parse::<i16>().ok()? as i64),
        ValueType::Int32 => Value::Int(raw.parse::<i32>().ok()? as i64),
        ValueType::Int64 => Value::Int(raw.parse::<i64>().ok()?),
    })
}

fn zero_of(value_type: ValueType) -> Value {
    match value_type {
        ValueType::Bool => Value::Bool(false),
        ValueType::Float32 | ValueType::Float64 => Value::Float(0.0),
        vt if vt.is_signed_integer() => Value::Int(0),
        _ => Value::UInt(0),
    }
}

/// Converts the unquoted content of one cell to a value of `kind`.
///
/// Empty cells become invalid rows only for kinds that carry validity;
/// anything else that does not parse is an error.
pub fn convert_cell(kind: &FieldKind, raw: &str) -> Result<Converted> {
    match kind {
        FieldKind::FixedString { length } => {
            if raw.len() > *length {
                return Err(Error::Conversion(format!(
                    "'{raw}' is {} bytes, longer than the fixed length {length}",
                    raw.len()
                )));
            }
            Ok(Converted::Text(raw.to_owned()))
        }
        FieldKind::IndexedString => Ok(Converted::Text(raw.to_owned())),
        FieldKind::Numeric {
            value_type,
            has_validity,
        } => {
            if raw.is_empty() && *has_validity {
                return Ok(Converted::Value {
                    value: zero_of(*value_type),
                    valid: false,
                });
            }
            match parse_number(*value_type, raw) {
                Some(value) => Ok(Converted::Value { value, valid: true }),
                None if raw.is_empty() => Err(Error::Conversion(
                    "empty cell in a field without validity".into(),
                )),
                None => Err(Error::Conversion(format!(
                    "'{raw}' is not a valid {value_type}"
                ))),
            }
        }
        FieldKind::Categorical { key, leaky, .. } => categorize(key, *leaky, raw),
        FieldKind::DateTime { has_validity, .. } => {
            if raw.is_empty() && *has_validity {
                return Ok(Converted::DateTime {
                    seconds: 0.0,
                    valid: false,
                    day: 0,
                });
            }
            let seconds = parse_datetime(raw)
                .ok_or_else(|| Error::Conversion(format!("'{raw}' is not a datetime")))?;
            Ok(Converted::DateTime {
                seconds,
                valid: true,
                day: day_of(seconds),
            })
        }
    }
}

fn categorize(key: &BTreeMap<String, i64>, leaky: bool, raw: &str) -> Result<Converted> {
    match key.get(raw) {
        Some(&code) => Ok(Converted::Category {
            code,
            freetext: None,
        }),
        None if leaky => Ok(Converted::Category {
            code: LEAKY_CODE,
            freetext: Some(raw.to_owned()),
        }),
        None => Err(Error::Conversion(format!(
            "'{raw}' is not a category of this field"
        ))),
    }
}
