//! In-memory typed value sequences, the unit every read returns and every
//! write consumes.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::kind::{FieldKind, NativeType, ValueType, LEAKY_CODE};

/// A single scalar, widened to one of five representations.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::UInt(a), Value::UInt(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::UInt(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => f.write_str(if *v { "True" } else { "False" }),
            Value::Str(v) => f.write_str(v),
        }
    }
}

impl Value {
    /// The value as a signed integer, when it is an integer that fits.
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::UInt(v) => i64::try_from(*v).ok(),
            Value::Bool(v) => Some(*v as i64),
            _ => None,
        }
    }
}

/// One row of one field: its value and whether it is present.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub value: Value,
    pub valid: bool,
}

impl Cell {
    pub fn valid(value: Value) -> Self {
        Cell { value, valid: true }
    }

    pub fn invalid(value: Value) -> Self {
        Cell {
            value,
            valid: false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum NumericValues {
    Int8(Vec<i8>),
    Int16(Vec<i16>),
    Int32(Vec<i32>),
    Int64(Vec<i64>),
    UInt8(Vec<u8>),
    UInt16(Vec<u16>),
    UInt32(Vec<u32>),
    UInt64(Vec<u64>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
    Bool(Vec<bool>),
}

/// Evaluates `$body` with `$v` bound to the inner vector, whatever its type.
#[macro_export]
#[doc(hidden)]
macro_rules! numeric_dispatch {
    ($value:expr, $v:ident => $body:expr) => {
        match $value {
            $crate::column::NumericValues::Int8($v) => $body,
            $crate::column::NumericValues::Int16($v) => $body,
            $crate::column::NumericValues::Int32($v) => $body,
            $crate::column::NumericValues::Int64($v) => $body,
            $crate::column::NumericValues::UInt8($v) => $body,
            $crate::column::NumericValues::UInt16($v) => $body,
            $crate::column::NumericValues::UInt32($v) => $body,
            $crate::column::NumericValues::UInt64($v) => $body,
            $crate::column::NumericValues::Float32($v) => $body,
            $crate::column::NumericValues::Float64($v) => $body,
            $crate::column::NumericValues::Bool($v) => $body,
        }
    };
}

/// Like `numeric_dispatch!`, rewrapping the resulting vector in the same variant.
macro_rules! numeric_map {
    ($value:expr, $v:ident => $body:expr) => {
        match $value {
            NumericValues::Int8($v) => NumericValues::Int8($body),
            NumericValues::Int16($v) => NumericValues::Int16($body),
            NumericValues::Int32($v) => NumericValues::Int32($body),
            NumericValues::Int64($v) => NumericValues::Int64($body),
            NumericValues::UInt8($v) => NumericValues::UInt8($body),
            NumericValues::UInt16($v) => NumericValues::UInt16($body),
            NumericValues::UInt32($v) => NumericValues::UInt32($body),
            NumericValues::UInt64($v) => NumericValues::UInt64($body),
            NumericValues::Float32($v) => NumericValues::Float32($body),
            NumericValues::Float64($v) => NumericValues::Float64($body),
            NumericValues::Bool($v) => NumericValues::Bool($body),
        }
    };
}

/// Matches two values of the same variant; falls through to `$other` otherwise.
macro_rules! numeric_pair {
    ($a:expr, $b:expr, $x:ident, $y:ident => $body:expr, else $other:expr) => {
        match ($a, $b) {
            (NumericValues::Int8($x), NumericValues::Int8($y)) => $body,
            (NumericValues::Int16($x), NumericValues::Int16($y)) => $body,
            (NumericValues::Int32($x), NumericValues::Int32($y)) => $body,
            (NumericValues::Int64($x), NumericValues::Int64($y)) => $body,
            (NumericValues::UInt8($x), NumericValues::UInt8($y)) => $body,
            (NumericValues::UInt16($x), NumericValues::UInt16($y)) => $body,
            (NumericValues::UInt32($x), NumericValues::UInt32($y)) => $body,
            (NumericValues::UInt64($x), NumericValues::UInt64($y)) => $body,
            (NumericValues::Float32($x), NumericValues::Float32($y)) => $body,
            (NumericValues::Float64($x), NumericValues::Float64($y)) => $body,
            (NumericValues::Bool($x), NumericValues::Bool($y)) => $body,
            #[allow(unreachable_patterns)]
            _ => $other,
        }
    };
}

#[allow(unused_imports)]
pub(crate) use numeric_map;
#[allow(unused_imports)]
pub(crate) use numeric_pair;

impl NumericValues {
    pub fn empty(value_type: ValueType) -> Self {
        Self::with_capacity(value_type, 0)
    }

    pub fn with_capacity(value_type: ValueType, n: usize) -> Self {
        match value_type {
            ValueType::Int8 => NumericValues::Int8(Vec::with_capacity(n)),
            ValueType::Int16 => NumericValues::Int16(Vec::with_capacity(n)),
            ValueType::Int32 => NumericValues::Int32(Vec::with_capacity(n)),
            ValueType::Int64 => NumericValues::Int64(Vec::with_capacity(n)),
            ValueType::UInt8 => NumericValues::UInt8(Vec::with_capacity(n)),
            ValueType::UInt16 => NumericValues::UInt16(Vec::with_capacity(n)),
            ValueType::UInt32 => NumericValues::UInt32(Vec::with_capacity(n)),
            ValueType::UInt64 => NumericValues::UInt64(Vec::with_capacity(n)),
            ValueType::Float32 => NumericValues::Float32(Vec::with_capacity(n)),
            ValueType::Float64 => NumericValues::Float64(Vec::with_capacity(n)),
            ValueType::Bool => NumericValues::Bool(Vec::with_capacity(n)),
        }
    }

    pub fn decode(value_type: ValueType, bytes: &[u8]) -> Self {
        let mut out = Self::empty(value_type);
        numeric_dispatch!(&mut out, v => *v = NativeType::decode(bytes));
        out
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        numeric_dispatch!(self, v => NativeType::encode(v, out))
    }

    pub fn value_type(&self) -> ValueType {
        fn vt<T: NativeType>(_: &[T]) -> ValueType {
            T::VALUE_TYPE
        }
        numeric_dispatch!(self, v => vt(v))
    }

    pub fn len(&self) -> usize {
        numeric_dispatch!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Value {
        numeric_dispatch!(self, v => v[i].to_value())
    }

    pub fn push_zero(&mut self) {
        numeric_dispatch!(self, v => v.push(NativeType::zero()))
    }

    /// Appends `value` after converting it to this vector's type.
    pub fn push_value(&mut self, value: &Value) -> Result<()> {
        let vt = self.value_type();
        numeric_dispatch!(self, v => {
            let x = NativeType::from_value(value)
                .ok_or_else(|| Error::Type(format!("{value:?} does not fit {vt}")))?;
            v.push(x);
        });
        Ok(())
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        numeric_map!(self, v => v[start..start + len].to_vec())
    }

    pub fn take(&self, indices: &[u64]) -> Self {
        numeric_map!(self, v => indices.iter().map(|&i| v[i as usize]).collect())
    }

    pub fn append(&mut self, other: &NumericValues) -> Result<()> {
        let mine = self.value_type();
        numeric_pair!(&mut *self, other, a, b => { a.extend_from_slice(b); Ok(()) },
        else Err(Error::Type(format!(
            "cannot append {} values to {mine} values",
            other.value_type()
        ))))
    }

    fn cmp_at(&self, i: usize, other: &NumericValues, j: usize) -> Ordering {
        numeric_pair!(self, other, a, b => a[i].total_cmp(&b[j]),
            else panic!("comparing {} with {}", self.value_type(), other.value_type()))
    }

    fn eq_at(&self, i: usize, other: &NumericValues, j: usize) -> bool {
        numeric_pair!(self, other, a, b => a[i].bit_eq(&b[j]), else false)
    }

    fn push_from(&mut self, src: &NumericValues, i: usize) {
        let mine = self.value_type();
        numeric_pair!(&mut *self, src, a, b => a.push(b[i]),
            else panic!("pushing {} into {mine}", src.value_type()))
    }
}

impl PartialEq for NumericValues {
    fn eq(&self, other: &Self) -> bool {
        numeric_pair!(self, other, a, b =>
            a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.bit_eq(y)),
            else false)
    }
}

/// A typed sequence of rows of one field, with its companions.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    /// Stored padded to a fixed byte length; held here without padding.
    FixedString(Vec<String>),
    IndexedString(Vec<String>),
    Numeric {
        values: NumericValues,
        validity: Option<Vec<bool>>,
    },
    Categorical(NumericValues),
    DateTime {
        values: Vec<f64>,
        validity: Option<Vec<bool>>,
        days: Option<Vec<i64>>,
    },
}

impl Column {
    pub fn numeric<T: NativeType>(values: Vec<T>) -> Column {
        Column::Numeric {
            values: T::wrap(values),
            validity: None,
        }
    }

    pub fn numeric_with_validity<T: NativeType>(values: Vec<T>, validity: Vec<bool>) -> Column {
        Column::Numeric {
            values: T::wrap(values),
            validity: Some(validity),
        }
    }

    pub fn indexed<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Column {
        Column::IndexedString(values.into_iter().map(Into::into).collect())
    }

    pub fn fixed<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Column {
        Column::FixedString(values.into_iter().map(Into::into).collect())
    }

    /// An empty column shaped for `kind`.
    pub fn empty_for(kind: &FieldKind) -> Column {
        match kind {
            FieldKind::FixedString { .. } => Column::FixedString(Vec::new()),
            FieldKind::IndexedString => Column::IndexedString(Vec::new()),
            FieldKind::Numeric {
                value_type,
                has_validity,
            } => Column::Numeric {
                values: NumericValues::empty(*value_type),
                validity: has_validity.then(Vec::new),
            },
            FieldKind::Categorical { value_type, .. } => {
                Column::Categorical(NumericValues::empty(*value_type))
            }
            FieldKind::DateTime {
                has_day,
                has_validity,
            } => Column::DateTime {
                values: Vec::new(),
                validity: has_validity.then(Vec::new),
                days: has_day.then(Vec::new),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::FixedString(v) | Column::IndexedString(v) => v.len(),
            Column::Numeric { values, .. } | Column::Categorical(values) => values.len(),
            Column::DateTime { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Column::FixedString(_) => "fixed_string",
            Column::IndexedString(_) => "indexed_string",
            Column::Numeric { .. } => "numeric",
            Column::Categorical(_) => "categorical",
            Column::DateTime { .. } => "datetime",
        }
    }

    pub fn validity(&self) -> Option<&[bool]> {
        match self {
            Column::Numeric { validity, .. } | Column::DateTime { validity, .. } => {
                validity.as_deref()
            }
            _ => None,
        }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.validity().is_none_or(|v| v[i])
    }

    /// Checks that `self` can hold data of `kind`, including companion presence.
    pub fn check_kind(&self, kind: &FieldKind) -> Result<()> {
        let ok = match (self, kind) {
            (Column::FixedString(v), FieldKind::FixedString { length }) => {
                if let Some(s) = v.iter().find(|s| s.len() > *length) {
                    return Err(Error::Conversion(format!(
                        "string '{s}' is longer than the fixed length {length}"
                    )));
                }
                true
            }
            (Column::IndexedString(_), FieldKind::IndexedString) => true,
            (
                Column::Numeric { values, validity },
                FieldKind::Numeric {
                    value_type,
                    has_validity,
                },
            ) => values.value_type() == *value_type && validity.is_some() == *has_validity,
            (Column::Categorical(values), FieldKind::Categorical { value_type, .. }) => {
                values.value_type() == *value_type
            }
            (
                Column::DateTime { validity, days, .. },
                FieldKind::DateTime {
                    has_day,
                    has_validity,
                },
            ) => validity.is_some() == *has_validity && days.is_some() == *has_day,
            _ => false,
        };
        if !ok {
            return Err(Error::Type(format!(
                "{} column does not match field kind {:?}",
                self.variant_name(),
                kind
            )));
        }
        self.check_lengths()
    }

    fn check_lengths(&self) -> Result<()> {
        let n = self.len();
        let bad = match self {
            Column::Numeric { validity, .. } => validity.as_ref().is_some_and(|v| v.len() != n),
            Column::DateTime { validity, days, .. } => {
                validity.as_ref().is_some_and(|v| v.len() != n)
                    || days.as_ref().is_some_and(|d| d.len() != n)
            }
            _ => false,
        };
        if bad {
            return Err(Error::Shape(
                "companion length differs from value length".into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> Cell {
        let value = match self {
            Column::FixedString(v) | Column::IndexedString(v) => Value::Str(v[i].clone()),
            Column::Numeric { values, .. } | Column::Categorical(values) => values.get(i),
            Column::DateTime { values, .. } => Value::Float(values[i]),
        };
        Cell {
            value,
            valid: self.is_valid(i),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// An empty column with the same variant and companions.
    pub fn empty_like(&self) -> Column {
        self.slice(0, 0)
    }

    pub fn slice(&self, start: usize, len: usize) -> Column {
        let cut = |v: &Option<Vec<bool>>| v.as_ref().map(|v| v[start..start + len].to_vec());
        match self {
            Column::FixedString(v) => Column::FixedString(v[start..start + len].to_vec()),
            Column::IndexedString(v) => Column::IndexedString(v[start..start + len].to_vec()),
            Column::Numeric { values, validity } => Column::Numeric {
                values: values.slice(start, len),
                validity: cut(validity),
            },
            Column::Categorical(values) => Column::Categorical(values.slice(start, len)),
            Column::DateTime {
                values,
                validity,
                days,
            } => Column::DateTime {
                values: values[start..start + len].to_vec(),
                validity: cut(validity),
                days: days.as_ref().map(|d| d[start..start + len].to_vec()),
            },
        }
    }

    /// `out[i] = self[indices[i]]`; every index must be in range.
    pub fn take(&self, indices: &[u64]) -> Column {
        let pick_bool = |v: &Option<Vec<bool>>| {
            v.as_ref()
                .map(|v| indices.iter().map(|&i| v[i as usize]).collect())
        };
        let pick_str = |v: &[String]| indices.iter().map(|&i| v[i as usize].clone()).collect();
        match self {
            Column::FixedString(v) => Column::FixedString(pick_str(v)),
            Column::IndexedString(v) => Column::IndexedString(pick_str(v)),
            Column::Numeric { values, validity } => Column::Numeric {
                values: values.take(indices),
                validity: pick_bool(validity),
            },
            Column::Categorical(values) => Column::Categorical(values.take(indices)),
            Column::DateTime {
                values,
                validity,
                days,
            } => Column::DateTime {
                values: indices.iter().map(|&i| values[i as usize]).collect(),
                validity: pick_bool(validity),
                days: days
                    .as_ref()
                    .map(|d| indices.iter().map(|&i| d[i as usize]).collect()),
            },
        }
    }

    pub fn append(&mut self, other: &Column) -> Result<()> {
        fn ext(a: &mut Option<Vec<bool>>, b: &Option<Vec<bool>>) -> Result<()> {
            match (a, b) {
                (Some(a), Some(b)) => a.extend_from_slice(b),
                (None, None) => {}
                _ => return Err(Error::Type("validity companion mismatch".into())),
            }
            Ok(())
        }
        match (self, other) {
            (Column::FixedString(a), Column::FixedString(b))
            | (Column::IndexedString(a), Column::IndexedString(b)) => {
                a.extend_from_slice(b);
            }
            (
                Column::Numeric { values, validity },
                Column::Numeric {
                    values: v2,
                    validity: m2,
                },
            ) => {
                ext(validity, m2)?;
                values.append(v2)?;
            }
            (Column::Categorical(a), Column::Categorical(b)) => a.append(b)?,
            (
                Column::DateTime {
                    values,
                    validity,
                    days,
                },
                Column::DateTime {
                    values: v2,
                    validity: m2,
                    days: d2,
                },
            ) => {
                ext(validity, m2)?;
                match (days, d2) {
                    (Some(a), Some(b)) => a.extend_from_slice(b),
                    (None, None) => {}
                    _ => return Err(Error::Type("day companion mismatch".into())),
                }
                values.extend_from_slice(v2);
            }
            (a, b) => {
                return Err(Error::Type(format!(
                    "cannot append {} to {}",
                    b.variant_name(),
                    a.variant_name()
                )))
            }
        }
        Ok(())
    }

    /// Whether rows of `self` and `other` can be ordered against each other.
    pub fn check_comparable(&self, other: &Column) -> Result<()> {
        let ok = match (self, other) {
            (
                Column::FixedString(_) | Column::IndexedString(_),
                Column::FixedString(_) | Column::IndexedString(_),
            ) => true,
            (
                Column::Numeric { values: a, .. } | Column::Categorical(a),
                Column::Numeric { values: b, .. } | Column::Categorical(b),
            ) => a.value_type() == b.value_type(),
            (Column::DateTime { .. }, Column::DateTime { .. }) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Type(format!(
                "cannot compare {} keys with {} keys",
                self.variant_name(),
                other.variant_name()
            )))
        }
    }

    /// Orders row `i` of `self` against row `j` of `other` by stored value.
    ///
    /// Panics if the columns are not comparable (see [`Column::check_comparable`]).
    pub fn cmp_rows(&self, i: usize, other: &Column, j: usize) -> Ordering {
        match (self, other) {
            (
                Column::FixedString(a) | Column::IndexedString(a),
                Column::FixedString(b) | Column::IndexedString(b),
            ) => a[i].as_bytes().cmp(b[j].as_bytes()),
            (
                Column::Numeric { values: a, .. } | Column::Categorical(a),
                Column::Numeric { values: b, .. } | Column::Categorical(b),
            ) => a.cmp_at(i, b, j),
            (Column::DateTime { values: a, .. }, Column::DateTime { values: b, .. }) => {
                NativeType::total_cmp(&a[i], &b[j])
            }
            (a, b) => panic!("comparing {} with {}", a.variant_name(), b.variant_name()),
        }
    }

    /// Exact row equality: two invalid rows are equal whatever their payload,
    /// floats compare bitwise.
    pub fn rows_equal(&self, i: usize, other: &Column, j: usize) -> bool {
        let (va, vb) = (self.is_valid(i), other.is_valid(j));
        if !va || !vb {
            return va == vb;
        }
        match (self, other) {
            (
                Column::FixedString(a) | Column::IndexedString(a),
                Column::FixedString(b) | Column::IndexedString(b),
            ) => a[i] == b[j],
            (Column::Numeric { values: a, .. }, Column::Numeric { values: b, .. })
            | (Column::Categorical(a), Column::Categorical(b)) => a.eq_at(i, b, j),
            (Column::DateTime { values: a, .. }, Column::DateTime { values: b, .. }) => {
                a[i].to_bits() == b[j].to_bits()
            }
            _ => false,
        }
    }
}

/// Appends rows copied from source columns, or fill rows, into a column of
/// a fixed shape.
#[derive(Debug)]
pub struct ColumnBuilder {
    column: Column,
}

impl ColumnBuilder {
    /// A builder shaped like `template`. With `fillable`, numeric and
    /// datetime outputs carry validity so fill rows can be marked invalid.
    pub fn new(template: &Column, fillable: bool) -> Self {
        let mut column = template.empty_like();
        if fillable {
            match &mut column {
                Column::Numeric { validity, .. } | Column::DateTime { validity, .. } => {
                    validity.get_or_insert_with(Vec::new);
                }
                _ => {}
            }
        }
        ColumnBuilder { column }
    }

    pub fn len(&self) -> usize {
        self.column.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies row `i` of `src`, which must have the template's variant.
    pub fn push_from(&mut self, src: &Column, i: usize) {
        let src_valid = src.is_valid(i);
        match (&mut self.column, src) {
            (Column::FixedString(a), Column::FixedString(b))
            | (Column::IndexedString(a), Column::IndexedString(b)) => a.push(b[i].clone()),
            (Column::Numeric { values, validity }, Column::Numeric { values: b, .. }) => {
                values.push_from(b, i);
                if let Some(v) = validity {
                    v.push(src_valid);
                }
            }
            (Column::Categorical(a), Column::Categorical(b)) => a.push_from(b, i),
            (
                Column::DateTime {
                    values,
                    validity,
                    days,
                },
                Column::DateTime {
                    values: b,
                    days: bd,
                    ..
                },
            ) => {
                values.push(b[i]);
                if let Some(v) = validity {
                    v.push(src_valid);
                }
                if let Some(d) = days {
                    d.push(match bd {
                        Some(bd) => bd[i],
                        None => crate::convert::day_of(b[i]),
                    });
                }
            }
            (a, b) => panic!(
                "pushing {} row into {} builder",
                b.variant_name(),
                a.variant_name()
            ),
        }
    }

    /// Appends the kind's fill row: zero and invalid for numeric and
    /// datetime, "" for strings, the reserved code for categoricals.
    pub fn push_fill(&mut self) {
        match &mut self.column {
            Column::FixedString(a) | Column::IndexedString(a) => a.push(String::new()),
            Column::Numeric { values, validity } => {
                values.push_zero();
                if let Some(v) = validity {
                    v.push(false);
                }
            }
            Column::Categorical(a) => {
                a.push_value(&Value::Int(LEAKY_CODE))
                    .expect("signed categorical holds -1");
            }
            Column::DateTime {
                values,
                validity,
                days,
            } => {
                values.push(0.0);
                if let Some(v) = validity {
                    v.push(false);
                }
                if let Some(d) = days {
                    d.push(0);
                }
            }
        }
    }

    pub fn finish(self) -> Column {
        self.column
    }

    /// Takes the rows built so far, leaving the builder empty.
    pub fn drain(&mut self) -> Column {
        let empty = self.column.empty_like();
        std::mem::replace(&mut self.column, empty)
    }
}
