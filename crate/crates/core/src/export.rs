//! CSV export in the form the importer reads back.

use std::collections::BTreeMap;
use std::io::Write;

use crate::column::{Column, NumericValues};
use crate::convert::format_datetime;
use crate::error::{Error, Result};
use crate::kind::{FieldKind, LEAKY_CODE};
use crate::schema::freetext_name;
use crate::store::{Dataset, Field};

pub const EXPORT_CHUNK_ROWS: u64 = 1 << 16;

/// Fields of `table` that export as their own column: leaky free-text
/// companions are folded back into their categorical parent.
pub fn exported_fields(ds: &Dataset, table: &str) -> Result<Vec<String>> {
    let meta = ds.table(table)?;
    let companions: Vec<String> = meta
        .fields
        .iter()
        .filter(|f| matches!(f.kind, FieldKind::Categorical { leaky: true, .. }))
        .map(|f| freetext_name(&f.name))
        .collect();
    Ok(meta
        .fields
        .iter()
        .filter(|f| !companions.contains(&f.name))
        .map(|f| f.name.clone())
        .collect())
}

struct Renderer {
    field: Field,
    reverse: BTreeMap<i64, String>,
    freetext: Option<Field>,
}

impl Renderer {
    fn new(ds: &Dataset, table: &str, name: &str) -> Result<Self> {
        let field = ds.field(table, name)?;
        let mut reverse = BTreeMap::new();
        let mut freetext = None;
        if let FieldKind::Categorical { key, leaky, .. } = field.kind() {
            reverse = key.iter().map(|(s, c)| (*c, s.clone())).collect();
            if *leaky {
                freetext = Some(ds.field(table, &freetext_name(name))?);
            }
        }
        Ok(Renderer {
            field,
            reverse,
            freetext,
        })
    }

    fn render(&self, start: u64, count: u64) -> Result<Vec<String>> {
        let col = self.field.read(start, count)?;
        let n = col.len();
        let mut out = Vec::with_capacity(n);
        match &col {
            Column::FixedString(v) | Column::IndexedString(v) => out.extend(v.iter().cloned()),
            Column::Numeric { values, validity } => {
                for i in 0..n {
                    let valid = validity.as_ref().is_none_or(|m| m[i]);
                    out.push(if valid {
                        render_number(values, i)
                    } else {
                        String::new()
                    });
                }
            }
            Column::Categorical(values) => {
                let text = match &self.freetext {
                    Some(f) => match f.read(start, count)? {
                        Column::IndexedString(v) => Some(v),
                        _ => return Err(Error::Type("free-text companion is not a string".into())),
                    },
                    None => None,
                };
                for i in 0..n {
                    let code = values.get(i).as_i64().unwrap_or(LEAKY_CODE);
                    let s = match (self.reverse.get(&code), &text) {
                        (Some(s), _) => s.clone(),
                        (None, Some(t)) if code == LEAKY_CODE => t[i].clone(),
                        (None, _) => String::new(),
                    };
                    out.push(s);
                }
            }
            Column::DateTime {
                values, validity, ..
            } => {
                for i in 0..n {
                    let valid = validity.as_ref().is_none_or(|m| m[i]);
                    out.push(if valid {
                        format_datetime(values[i])
                    } else {
                        String::new()
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Text for one numeric value, in a form that parses back to the same bits.
pub fn render_number(values: &NumericValues, i: usize) -> String {
    match values {
        NumericValues::Bool(v) => if v[i] { "True" } else { "False" }.to_owned(),
        NumericValues::Float32(v) => render_float(v[i] as f64, v[i]),
        NumericValues::Float64(v) => render_float(v[i], v[i]),
        other => other.get(i).to_string(),
    }
}

/// Plain decimal for ordinary magnitudes, exponent form otherwise so that
/// values such as `f64::MAX` stay short. Both forms parse back exactly.
fn render_float<T: std::fmt::Display + std::fmt::LowerExp>(magnitude: f64, x: T) -> String {
    let a = magnitude.abs();
    if a != 0.0 && a.is_finite() && !(1e-6..1e17).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// Writes `fields` of `table` (all exported fields when `None`) as CSV with
/// a header row, streaming in chunks.
pub fn export_csv(
    ds: &Dataset,
    table: &str,
    fields: Option<&[String]>,
    out: impl Write,
) -> Result<u64> {
    let names = match fields {
        Some(f) => f.to_vec(),
        None => exported_fields(ds, table)?,
    };
    let renderers = names
        .iter()
        .map(|n| Renderer::new(ds, table, n))
        .collect::<Result<Vec<_>>>()?;
    let rows = ds.table(table)?.row_count;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    };
    writer.write_record(&names).map_err(csv_err)?;
    let mut start = 0;
    while start < rows {
        let count = EXPORT_CHUNK_ROWS.min(rows - start);
        let columns = renderers
            .iter()
            .map(|r| r.render(start, count))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..count as usize {
            writer
                .write_record(columns.iter().map(|c| c[i].as_str()))
                .map_err(csv_err)?;
        }
        start += count;
    }
    writer.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering() {
        let v = NumericValues::Float64(vec![f64::MAX, 1.5, 1600000000.0, 1e-9, 0.0]);
        let r: Vec<_> = (0..5).map(|i| render_number(&v, i)).collect();
        assert_eq!(
            r,
            ["1.7976931348623157e308", "1.5", "1600000000", "1e-9", "0"]
        );
        assert_eq!(r[0].parse::<f64>().unwrap(), f64::MAX);
        let f = NumericValues::Float32(vec![f32::MAX]);
        assert_eq!(render_number(&f, 0), "3.4028235e38");
    }
}
