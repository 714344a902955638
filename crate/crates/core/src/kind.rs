//! Field kinds and the fixed-width native value types that back them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::column::{NumericValues, Value};
use crate::error::{Error, Result};

/// Code stored in a leaky categorical for rows that hold free text instead
/// of a category.
pub const LEAKY_CODE: i64 = -1;

/// Suffix of the indexed-string companion that holds a leaky categorical's
/// free text.
pub const FREETEXT_SUFFIX: &str = "_freetext";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int8,
    Int16,
    Int32,
    Int64,
    UInt8,
    UInt16,
    UInt32,
    UInt64,
    Float32,
    Float64,
    Bool,
}

impl ValueType {
    pub const ALL: [ValueType; 11] = [
        ValueType::Int8,
        ValueType::Int16,
        ValueType::Int32,
        ValueType::Int64,
        ValueType::UInt8,
        ValueType::UInt16,
        ValueType::UInt32,
        ValueType::UInt64,
        ValueType::Float32,
        ValueType::Float64,
        ValueType::Bool,
    ];

    pub fn width(self) -> usize {
        match self {
            ValueType::Int8 | ValueType::UInt8 | ValueType::Bool => 1,
            ValueType::Int16 | ValueType::UInt16 => 2,
            ValueType::Int32 | ValueType::UInt32 | ValueType::Float32 => 4,
            ValueType::Int64 | ValueType::UInt64 | ValueType::Float64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueType::Int8 => "int8",
            ValueType::Int16 => "int16",
            ValueType::Int32 => "int32",
            ValueType::Int64 => "int64",
            ValueType::UInt8 => "uint8",
            ValueType::UInt16 => "uint16",
            ValueType::UInt32 => "uint32",
            ValueType::UInt64 => "uint64",
            ValueType::Float32 => "float32",
            ValueType::Float64 => "float64",
            ValueType::Bool => "bool",
        }
    }

    pub fn is_signed_integer(self) -> bool {
        matches!(
            self,
            ValueType::Int8 | ValueType::Int16 | ValueType::Int32 | ValueType::Int64
        )
    }

    pub fn is_float(self) -> bool {
        matches!(self, ValueType::Float32 | ValueType::Float64)
    }

    /// Inclusive range representable by a signed integer type.
    pub fn signed_range(self) -> Option<(i64, i64)> {
        match self {
            ValueType::Int8 => Some((i8::MIN as i64, i8::MAX as i64)),
            ValueType::Int16 => Some((i16::MIN as i64, i16::MAX as i64)),
            ValueType::Int32 => Some((i32::MIN as i64, i32::MAX as i64)),
            ValueType::Int64 => Some((i64::MIN, i64::MAX)),
            _ => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValueType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ValueType::ALL
            .into_iter()
            .find(|vt| vt.name() == s)
            .ok_or_else(|| Error::Type(format!("unknown value type '{s}'")))
    }
}

/// The storage kind of a field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    FixedString {
        length: usize,
    },
    IndexedString,
    Numeric {
        value_type: ValueType,
        has_validity: bool,
    },
    Categorical {
        value_type: ValueType,
        key: BTreeMap<String, i64>,
        leaky: bool,
    },
    DateTime {
        has_day: bool,
        has_validity: bool,
    },
}

impl FieldKind {
    pub fn numeric(value_type: ValueType) -> Self {
        FieldKind::Numeric {
            value_type,
            has_validity: false,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            FieldKind::FixedString { .. } => "fixed_string",
            FieldKind::IndexedString => "indexed_string",
            FieldKind::Numeric { .. } => "numeric",
            FieldKind::Categorical { .. } => "categorical",
            FieldKind::DateTime { .. } => "datetime",
        }
    }

    /// Byte width of one value in the `.dat` file; `None` for indexed strings.
    pub fn value_width(&self) -> Option<usize> {
        match self {
            FieldKind::FixedString { length } => Some(*length),
            FieldKind::IndexedString => None,
            FieldKind::Numeric { value_type, .. } | FieldKind::Categorical { value_type, .. } => {
                Some(value_type.width())
            }
            FieldKind::DateTime { .. } => Some(8),
        }
    }

    pub fn value_type(&self) -> Option<ValueType> {
        match self {
            FieldKind::Numeric { value_type, .. } | FieldKind::Categorical { value_type, .. } => {
                Some(*value_type)
            }
            FieldKind::DateTime { .. } => Some(ValueType::Float64),
            _ => None,
        }
    }

    pub fn has_validity(&self) -> bool {
        matches!(
            self,
            FieldKind::Numeric {
                has_validity: true,
                ..
            } | FieldKind::DateTime {
                has_validity: true,
                ..
            }
        )
    }

    pub fn has_index(&self) -> bool {
        matches!(self, FieldKind::IndexedString)
    }

    pub fn has_day(&self) -> bool {
        matches!(self, FieldKind::DateTime { has_day: true, .. })
    }

    /// The kind a field takes when rows may be filled in by a join: numeric
    /// and datetime kinds acquire a validity companion.
    pub fn with_validity(&self) -> FieldKind {
        match self {
            FieldKind::Numeric { value_type, .. } => FieldKind::Numeric {
                value_type: *value_type,
                has_validity: true,
            },
            FieldKind::DateTime { has_day, .. } => FieldKind::DateTime {
                has_day: *has_day,
                has_validity: true,
            },
            other => other.clone(),
        }
    }

    /// Checks the kind's own invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldKind::FixedString { length } if *length == 0 => {
                Err(Error::Type("fixed string length must be at least 1".into()))
            }
            FieldKind::Categorical {
                value_type,
                key,
                leaky,
            } => {
                let (lo, hi) = value_type.signed_range().ok_or_else(|| {
                    Error::Type(format!(
                        "categorical value type must be a signed integer, got {value_type}"
                    ))
                })?;
                let mut seen = BTreeMap::new();
                for (s, &code) in key {
                    if code < lo || code > hi {
                        return Err(Error::Key(format!(
                            "category '{s}' code {code} does not fit {value_type}"
                        )));
                    }
                    if *leaky && code == LEAKY_CODE {
                        return Err(Error::Key(format!(
                            "category '{s}' uses the reserved code {LEAKY_CODE}"
                        )));
                    }
                    if let Some(prev) = seen.insert(code, s) {
                        return Err(Error::Key(format!(
                            "categories '{prev}' and '{s}' share code {code}"
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Fixed-width values that can live in a `.dat` file.
pub trait NativeType: Copy + Send + Sync + fmt::Debug + PartialEq + 'static {
    const VALUE_TYPE: ValueType;
    const WIDTH: usize;

    fn zero() -> Self;
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
    /// Total order; NaN sorts after every number.
    fn total_cmp(&self, other: &Self) -> Ordering;
    /// Bitwise equality (NaN equals NaN with the same bit pattern).
    fn bit_eq(&self, other: &Self) -> bool;
    fn to_value(self) -> Value;
    fn from_value(value: &Value) -> Option<Self>;
    fn wrap(values: Vec<Self>) -> NumericValues;
    fn unwrap_ref(values: &NumericValues) -> Option<&Vec<Self>>;
    fn unwrap(values: NumericValues) -> Result<Vec<Self>, NumericValues>;

    fn encode(values: &[Self], out: &mut Vec<u8>) {
        out.reserve(values.len() * Self::WIDTH);
        for v in values {
            v.put_le(out);
        }
    }

    fn decode(bytes: &[u8]) -> Vec<Self> {
        bytes.chunks_exact(Self::WIDTH).map(Self::get_le).collect()
    }
}

macro_rules! int_native {
    ($t:ty, $vt:ident, $variant:ident, $wide:ty) => {
        impl NativeType for $t {
            const VALUE_TYPE: ValueType = ValueType::$vt;
            const WIDTH: usize = std::mem::size_of::<$t>();

            fn zero() -> Self {
                0
            }
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn get_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("width checked"))
            }
            fn total_cmp(&self, other: &Self) -> Ordering {
                self.cmp(other)
            }
            fn bit_eq(&self, other: &Self) -> bool {
                self == other
            }
            fn wrap(values: Vec<Self>) -> NumericValues {
                NumericValues::$vt(values)
            }
            fn unwrap_ref(values: &NumericValues) -> Option<&Vec<Self>> {
                match values {
                    NumericValues::$vt(v) => Some(v),
                    _ => None,
                }
            }
            fn unwrap(values: NumericValues) -> Result<Vec<Self>, NumericValues> {
                match values {
                    NumericValues::$vt(v) => Ok(v),
                    other => Err(other),
                }
            }
            fn to_value(self) -> Value {
                Value::$variant(self as $wide)
            }
            fn from_value(value: &Value) -> Option<Self> {
                match *value {
                    Value::Int(v) => <$t>::try_from(v).ok(),
                    Value::UInt(v) => <$t>::try_from(v).ok(),
                    _ => None,
                }
            }
        }
    };
}

int_native!(i8, Int8, Int, i64);
int_native!(i16, Int16, Int, i64);
int_native!(i32, Int32, Int, i64);
int_native!(i64, Int64, Int, i64);
int_native!(u8, UInt8, UInt, u64);
int_native!(u16, UInt16, UInt, u64);
int_native!(u32, UInt32, UInt, u64);
int_native!(u64, UInt64, UInt, u64);

macro_rules! float_native {
    ($t:ty, $vt:ident) => {
        impl NativeType for $t {
            const VALUE_TYPE: ValueType = ValueType::$vt;
            const WIDTH: usize = std::mem::size_of::<$t>();

            fn zero() -> Self {
                0.0
            }
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn get_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("width checked"))
            }
            fn total_cmp(&self, other: &Self) -> Ordering {
                match (self.is_nan(), other.is_nan()) {
                    (true, true) => Ordering::Equal,
                    (true, false) => Ordering::Greater,
                    (false, true) => Ordering::Less,
                    // -0.0 and 0.0 compare equal so stability decides their order
                    (false, false) => self.partial_cmp(other).expect("not NaN"),
                }
            }
            fn bit_eq(&self, other: &Self) -> bool {
                self.to_bits() == other.to_bits()
            }
            fn wrap(values: Vec<Self>) -> NumericValues {
                NumericValues::$vt(values)
            }
            fn unwrap_ref(values: &NumericValues) -> Option<&Vec<Self>> {
                match values {
                    NumericValues::$vt(v) => Some(v),
                    _ => None,
                }
            }
            fn unwrap(values: NumericValues) -> Result<Vec<Self>, NumericValues> {
                match values {
                    NumericValues::$vt(v) => Ok(v),
                    other => Err(other),
                }
            }
            fn to_value(self) -> Value {
                Value::Float(self as f64)
            }
            fn from_value(value: &Value) -> Option<Self> {
                match *value {
                    Value::Float(v) => Some(v as $t),
                    Value::Int(v) => Some(v as $t),
                    Value::UInt(v) => Some(v as $t),
                    _ => None,
                }
            }
        }
    };
}

float_native!(f32, Float32);
float_native!(f64, Float64);

impl NativeType for bool {
    const VALUE_TYPE: ValueType = ValueType::Bool;
    const WIDTH: usize = 1;

    fn zero() -> Self {
        false
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
    fn get_le(bytes: &[u8]) -> Self {
        bytes[0] != 0
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
    fn bit_eq(&self, other: &Self) -> bool {
        self == other
    }
    fn wrap(values: Vec<Self>) -> NumericValues {
        NumericValues::Bool(values)
    }
    fn unwrap_ref(values: &NumericValues) -> Option<&Vec<Self>> {
        match values {
            NumericValues::Bool(v) => Some(v),
            _ => None,
        }
    }
    fn unwrap(values: NumericValues) -> Result<Vec<Self>, NumericValues> {
        match values {
            NumericValues::Bool(v) => Ok(v),
            other => Err(other),
        }
    }
    fn to_value(self) -> Value {
        Value::Bool(self)
    }
    fn from_value(value: &Value) -> Option<Self> {
        match *value {
            Value::Bool(v) => Some(v),
            _ => None,
        }
    }
}
