//! Equal-key spans over sorted keys and per-span reducers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::column::{Column, ColumnBuilder, NumericValues, Value};
use crate::convert::day_of;
use crate::error::{Error, Result};
use crate::kind::{NativeType, ValueType};
use crate::store::{ChunkCursor, ColumnSource};

pub const SPAN_CHUNK_ROWS: u64 = 1 << 16;

/// Boundaries of equal-key runs: starts at 0, ends at the row count,
/// strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanIndex {
    boundaries: Vec<u64>,
}

impl SpanIndex {
    pub fn from_boundaries(boundaries: Vec<u64>) -> Result<Self> {
        let ok = boundaries.first() == Some(&0) && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::Parameter(
                "span boundaries must start at 0 and strictly increase".into(),
            ));
        }
        Ok(SpanIndex { boundaries })
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    pub fn span_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn row_count(&self) -> u64 {
        *self.boundaries.last().expect("at least one boundary")
    }

    pub fn spans(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Streams rows, starting a new span whenever `key_of` changes.
fn spans_by<K>(
    source: &dyn ColumnSource,
    mut key_of: impl FnMut(&Column, usize) -> Result<K>,
    mut cmp: impl FnMut(&K, &K) -> Ordering,
) -> Result<SpanIndex> {
    let mut boundaries = vec![0];
    let mut previous: Option<K> = None;
    let mut row = 0u64;
    for chunk in ChunkCursor::new(source, SPAN_CHUNK_ROWS) {
        let chunk = chunk?;
        for i in 0..chunk.len() {
            let key = key_of(&chunk, i)?;
            if let Some(p) = &previous {
                match cmp(p, &key) {
                    Ordering::Less => boundaries.push(row),
                    Ordering::Equal => {}
                    Ordering::Greater => {
                        return Err(Error::Precondition(format!(
                            "{} is not sorted at row {row}",
                            source.describe()
                        )))
                    }
                }
            }
            previous = Some(key);
            row += 1;
        }
    }
    if row > 0 {
        boundaries.push(row);
    }
    Ok(SpanIndex { boundaries })
}

/// Spans of equal values in a sorted key source, in one streaming pass.
pub fn get_spans(keys: &dyn ColumnSource) -> Result<SpanIndex> {
    spans_by(keys, |c, i| Ok(c.slice(i, 1)), |a, b| a.cmp_rows(0, b, 0))
}

fn day_at(column: &Column, i: usize) -> Result<i64> {
    match column {
        Column::DateTime { values, days, .. } => {
            Ok(days.as_ref().map_or_else(|| day_of(values[i]), |d| d[i]))
        }
        Column::Numeric { values, .. } if !values.value_type().is_float() => values
            .get(i)
            .as_i64()
            .ok_or_else(|| Error::Conversion("day number exceeds int64".into())),
        other => Err(Error::Type(format!(
            "bucketing needs a datetime or integer day field, got {}",
            other.variant_name()
        ))),
    }
}

/// Spans of rows whose day falls in the same `bucket_days`-long bucket,
/// counted from the first (smallest) day.
pub fn bucket_spans(days: &dyn ColumnSource, bucket_days: i64) -> Result<SpanIndex> {
    if bucket_days < 1 {
        return Err(Error::Parameter(format!(
            "bucket length must be at least one day, got {bucket_days}"
        )));
    }
    let mut origin: Option<i64> = None;
    let mut last_day = i64::MIN;
    spans_by(
        days,
        |c, i| {
            let day = day_at(c, i)?;
            if day < last_day {
                return Err(Error::Precondition(format!(
                    "{} is not sorted",
                    days.describe()
                )));
            }
            last_day = day;
            let origin = *origin.get_or_insert(day);
            Ok((day - origin).div_euclid(bucket_days))
        },
        |a, b| a.cmp(b),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reducer {
    Count,
    Min,
    Max,
    Sum,
    First,
    Last,
}

impl Reducer {
    pub const ALL: [Reducer; 6] = [
        Reducer::Count,
        Reducer::Min,
        Reducer::Max,
        Reducer::Sum,
        Reducer::First,
        Reducer::Last,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Reducer::Count => "count",
            Reducer::Min => "min",
            Reducer::Max => "max",
            Reducer::Sum => "sum",
            Reducer::First => "first",
            Reducer::Last => "last",
        }
    }
}

impl fmt::Display for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Reducer::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown reducer '{s}'")))
    }
}

/// Calls `f` with `Some(row)` for every row in order and with `None` once
/// each span ends.
fn walk(
    spans: &SpanIndex,
    values: &dyn ColumnSource,
    mut f: impl FnMut(Option<(&Column, usize)>) -> Result<()>,
) -> Result<()> {
    let bounds = spans.boundaries();
    let mut next_end = 1;
    let mut at = 0u64;
    for chunk in ChunkCursor::new(values, SPAN_CHUNK_ROWS) {
        let chunk = chunk?;
        for i in 0..chunk.len() {
            f(Some((&chunk, i)))?;
            at += 1;
            if at == bounds[next_end] {
                f(None)?;
                next_end += 1;
            }
        }
    }
    Ok(())
}

/// Reduces `values` over each span. `min`, `max` and `sum` skip invalid
/// rows and yield an invalid row for spans with none; `count` counts every
/// row; `first` and `last` copy rows as stored.
pub fn span_reduce(
    spans: &SpanIndex,
    values: &dyn ColumnSource,
    reducer: Reducer,
) -> Result<Column> {
    if values.row_count() != spans.row_count() {
        return Err(Error::Shape(format!(
            "{} has {} rows, spans cover {}",
            values.describe(),
            values.row_count(),
            spans.row_count()
        )));
    }
    let template = values.read_rows(0, 0)?;
    match reducer {
        Reducer::Count => Ok(Column::numeric(
            spans
                .spans()
                .map(|(a, b)| (b - a) as i64)
                .collect::<Vec<_>>(),
        )),
        Reducer::First | Reducer::Last => {
            let mut out = ColumnBuilder::new(&template, false);
            let mut held: Option<Column> = None;
            let first = reducer == Reducer::First;
            walk(spans, values, |step| {
                match step {
                    Some((c, i)) if !first || held.is_none() => held = Some(c.slice(i, 1)),
                    Some(_) => {}
                    None => out.push_from(&held.take().expect("spans are non-empty"), 0),
                }
                Ok(())
            })?;
            Ok(out.finish())
        }
        Reducer::Min | Reducer::Max => {
            let want = if reducer == Reducer::Min {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            match &template {
                Column::Numeric { values: v, .. } => {
                    crate::numeric_dispatch!(v, t => extreme(spans, values, want, t))
                }
                Column::DateTime { days, .. } => {
                    let (best, validity) = extreme_values::<f64>(spans, values, want)?;
                    Ok(Column::DateTime {
                        days: days
                            .as_ref()
                            .map(|_| best.iter().map(|&t| day_of(t)).collect()),
                        values: best,
                        validity: Some(validity),
                    })
                }
                other => Err(Error::Type(format!(
                    "{reducer} is not defined for {} fields",
                    other.variant_name()
                ))),
            }
        }
        Reducer::Sum => match &template {
            Column::Numeric { .. } => sum(spans, values),
            other => Err(Error::Type(format!(
                "sum is not defined for {} fields",
                other.variant_name()
            ))),
        },
    }
}

fn typed_row<T: NativeType>(column: &Column, i: usize) -> (T, bool) {
    let v = match column {
        Column::Numeric { values, .. } => T::unwrap_ref(values).map(|v| v[i]),
        Column::DateTime { values, .. } => T::unwrap(NumericValues::Float64(vec![values[i]]))
            .ok()
            .map(|v| v[0]),
        _ => None,
    };
    (v.expect("value type fixed by template"), column.is_valid(i))
}

fn extreme_values<T: NativeType>(
    spans: &SpanIndex,
    values: &dyn ColumnSource,
    want: Ordering,
) -> Result<(Vec<T>, Vec<bool>)> {
    let mut best: Option<T> = None;
    let mut out = Vec::with_capacity(spans.span_count());
    let mut validity = Vec::with_capacity(spans.span_count());
    walk(spans, values, |step| {
        match step {
            Some((c, i)) => {
                let (v, valid) = typed_row::<T>(c, i);
                if valid && best.is_none_or(|b| v.total_cmp(&b) == want) {
                    best = Some(v);
                }
            }
            None => {
                out.push(best.unwrap_or_else(T::zero));
                validity.push(best.is_some());
                best = None;
            }
        }
        Ok(())
    })?;
    Ok((out, validity))
}

fn extreme<T: NativeType>(
    spans: &SpanIndex,
    values: &dyn ColumnSource,
    want: Ordering,
    _: &[T],
) -> Result<Column> {
    let (out, validity) = extreme_values::<T>(spans, values, want)?;
    Ok(Column::numeric_with_validity(out, validity))
}

#[derive(Clone, Copy)]
enum Total {
    Int(i64),
    UInt(u64),
    Float(f64),
}

fn sum(spans: &SpanIndex, values: &dyn ColumnSource) -> Result<Column> {
    let overflow = || Error::Conversion("span sum overflows 64 bits".into());
    let zero = match values.read_rows(0, 0)? {
        Column::Numeric { values, .. } if values.value_type().is_float() => Total::Float(0.0),
        Column::Numeric { values, .. }
            if !values.value_type().is_signed_integer()
                && values.value_type() != ValueType::Bool =>
        {
            Total::UInt(0)
        }
        _ => Total::Int(0),
    };
    let mut total = zero;
    let mut any = false;
    let mut out = Vec::with_capacity(spans.span_count());
    let mut validity = Vec::with_capacity(spans.span_count());
    walk(spans, values, |step| match step {
        Some((c, i)) => {
            if !c.is_valid(i) {
                return Ok(());
            }
            any = true;
            let v = match c {
                Column::Numeric { values, .. } => values.get(i),
                _ => unreachable!("checked numeric"),
            };
            total = match (total, v) {
                (Total::Int(t), Value::Int(x)) => {
                    Total::Int(t.checked_add(x).ok_or_else(overflow)?)
                }
                (Total::Int(t), Value::Bool(x)) => Total::Int(t + x as i64),
                (Total::UInt(t), Value::UInt(x)) => {
                    Total::UInt(t.checked_add(x).ok_or_else(overflow)?)
                }
                (Total::Float(t), Value::Float(x)) => Total::Float(t + x),
                _ => unreachable!("accumulator follows value type"),
            };
            Ok(())
        }
        None => {
            out.push(total);
            validity.push(any);
            total = zero;
            any = false;
            Ok(())
        }
    })?;
    Ok(match zero {
        Total::Int(_) => Column::numeric_with_validity(
            out.iter()
                .map(|t| if let Total::Int(v) = t { *v } else { 0 })
                .collect::<Vec<i64>>(),
            validity,
        ),
        Total::UInt(_) => Column::numeric_with_validity(
            out.iter()
                .map(|t| if let Total::UInt(v) = t { *v } else { 0 })
                .collect::<Vec<u64>>(),
            validity,
        ),
        Total::Float(_) => Column::numeric_with_validity(
            out.iter()
                .map(|t| if let Total::Float(v) = t { *v } else { 0.0 })
                .collect::<Vec<f64>>(),
            validity,
        ),
    })
}
