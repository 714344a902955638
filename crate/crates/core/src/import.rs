//! Streaming CSV import driven by a [`SchemaDoc`].
//!
//! Each CSV is read record by record; converted values are buffered per
//! field for at most `chunk_rows` rows before being flushed to the field
//! files, so memory use does not depend on file size.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::PathBuf;
use std::time::Instant;

use crate::column::{Column, NumericValues, Value};
use crate::convert::{convert_cell, Converted};
use crate::error::{Error, Result};
use crate::kind::{FieldKind, LEAKY_CODE};
use crate::schema::{schema_to_field_kinds, ColumnPlan, SchemaDoc};
use crate::store::{Dataset, FieldWriter, ProvenanceRecord};

pub const IMPORT_VERSION: &str = "1.0.0";
pub const DEFAULT_CHUNK_ROWS: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct ImportJob {
    pub schema: SchemaDoc,
    /// Table name and the CSV file holding it.
    pub inputs: Vec<(String, PathBuf)>,
    pub chunk_rows: usize,
    /// Store unparseable cells as invalid (or zero / reserved code) and
    /// count them instead of failing.
    pub lenient: bool,
}

impl ImportJob {
    pub fn new(schema: SchemaDoc) -> Self {
        ImportJob {
            schema,
            inputs: Vec::new(),
            chunk_rows: DEFAULT_CHUNK_ROWS,
            lenient: false,
        }
    }

    pub fn input(mut self, table: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.push((table.to_owned(), path.into()));
        self
    }
}

/// Conversion counters for one source column.
///
/// `rows_empty` counts rows stored as invalid, so for fields with validity
/// `rows_empty + valid rows == rows_total`. `rows_invalid` counts cells that
/// failed to convert in lenient mode (a subset of `rows_empty` when the
/// field has validity).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConversionStats {
    pub field: String,
    pub rows_total: u64,
    pub rows_empty: u64,
    pub rows_invalid: u64,
    pub freetext_rows: u64,
}

#[derive(Clone, Debug)]
pub struct TableImport {
    pub table: String,
    pub row_count: u64,
    pub seconds: f64,
    /// Largest number of rows held in any field buffer.
    pub peak_buffered_rows: usize,
    pub fields: Vec<ConversionStats>,
}

/// Buffers converted values for one source column.
struct ColumnLoader {
    plan: ColumnPlan,
    csv_index: usize,
    buffer: Column,
    freetext: Option<Vec<String>>,
    writer: Option<FieldWriter>,
    freetext_writer: Option<FieldWriter>,
    stats: ConversionStats,
}

impl ColumnLoader {
    fn push(&mut self, raw: &str, lenient: bool, row: u64) -> Result<()> {
        self.stats.rows_total += 1;
        let converted = match convert_cell(&self.plan.kind, raw) {
            Ok(c) => c,
            Err(e) if !lenient => {
                return Err(Error::Import(format!(
                    "row {row}, field '{}': {e}",
                    self.plan.source
                )))
            }
            Err(_) => {
                self.stats.rows_invalid += 1;
                self.fallback()
            }
        };
        match (&mut self.buffer, converted) {
            (Column::FixedString(v) | Column::IndexedString(v), Converted::Text(s)) => v.push(s),
            (Column::Numeric { values, validity }, Converted::Value { value, valid }) => {
                values.push_value(&value)?;
                if let Some(m) = validity {
                    m.push(valid);
                }
                if !valid {
                    self.stats.rows_empty += 1;
                }
            }
            (Column::Categorical(values), Converted::Category { code, freetext }) => {
                values.push_value(&Value::Int(code))?;
                if let Some(ft) = &mut self.freetext {
                    if freetext.is_some() {
                        self.stats.freetext_rows += 1;
                    }
                    ft.push(freetext.unwrap_or_default());
                }
            }
            (
                Column::DateTime {
                    values,
                    validity,
                    days,
                },
                Converted::DateTime {
                    seconds,
                    valid,
                    day,
                },
            ) => {
                values.push(seconds);
                if let Some(m) = validity {
                    m.push(valid);
                }
                if let Some(d) = days {
                    d.push(day);
                }
                if !valid {
                    self.stats.rows_empty += 1;
                }
            }
            (col, conv) => unreachable!("{} column got {conv:?}", col.variant_name()),
        }
        Ok(())
    }

    /// Value stored for a cell that failed to convert in lenient mode.
    fn fallback(&self) -> Converted {
        match &self.plan.kind {
            FieldKind::FixedString { .. } | FieldKind::IndexedString => {
                Converted::Text(String::new())
            }
            FieldKind::Numeric { value_type, .. } => {
                let mut zero = NumericValues::empty(*value_type);
                zero.push_zero();
                Converted::Value {
                    value: zero.get(0),
                    valid: false,
                }
            }
            FieldKind::Categorical { .. } => Converted::Category {
                code: LEAKY_CODE,
                freetext: None,
            },
            FieldKind::DateTime { .. } => Converted::DateTime {
                seconds: 0.0,
                valid: false,
                day: 0,
            },
        }
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.write(&self.buffer)?;
        }
        self.buffer = self.buffer.empty_like();
        if let (Some(w), Some(ft)) = (&mut self.freetext_writer, &mut self.freetext) {
            w.write(&Column::IndexedString(std::mem::take(ft)))?;
        }
        Ok(())
    }

    fn abandon(&mut self) {
        if let Some(w) = self.writer.take() {
            w.abandon();
        }
        if let Some(w) = self.freetext_writer.take() {
            w.abandon();
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    let byte = e.position().map_or(0, |p| p.byte());
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Parse {
            byte,
            message: e.to_string(),
        },
    }
}

/// Imports every input of `job` into `ds`, one new table per input.
pub fn import_csv(ds: &mut Dataset, job: &ImportJob) -> Result<Vec<TableImport>> {
    if job.chunk_rows == 0 {
        return Err(Error::Parameter("chunk_rows must be at least 1".into()));
    }
    for (table, _) in &job.inputs {
        if job.schema.table(table).is_none() {
            return Err(Error::Schema(format!(
                "table '{table}' is not in the schema"
            )));
        }
    }
    let mut reports = Vec::with_capacity(job.inputs.len());
    for (table, path) in &job.inputs {
        let file = File::open(path)?;
        reports.push(import_table(ds, job, table, file)?);
    }
    let tables: Vec<_> = job.inputs.iter().map(|(t, _)| t.as_str()).collect();
    ds.append_provenance(
        ProvenanceRecord::new("import", IMPORT_VERSION)
            .param("tables", tables.join(","))
            .param("lenient", job.lenient)
            .param("chunk_rows", job.chunk_rows),
    )?;
    Ok(reports)
}

/// Imports one CSV stream as `table`.
pub fn import_table(
    ds: &mut Dataset,
    job: &ImportJob,
    table: &str,
    input: impl Read,
) -> Result<TableImport> {
    let started = Instant::now();
    let ts = job
        .schema
        .table(table)
        .ok_or_else(|| Error::Schema(format!("table '{table}' is not in the schema")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    let position: BTreeMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let plans = schema_to_field_kinds(ts);
    let missing: Vec<_> = plans
        .iter()
        .filter(|p| !position.contains_key(p.source.as_str()))
        .map(|p| p.source.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Import(format!(
            "table '{table}': CSV header lacks columns: {}",
            missing.join(", ")
        )));
    }
    if !job.lenient {
        let extra: Vec<_> = header.iter().filter(|h| ts.field(h).is_none()).collect();
        if !extra.is_empty() {
            return Err(Error::Import(format!(
                "table '{table}': CSV has columns not in the schema: {}",
                extra.join(", ")
            )));
        }
    }

    ds.create_table(table)?;
    let mut loaders = Vec::with_capacity(plans.len());
    for plan in plans {
        let writer = ds.field_writer(table, &plan.source, plan.kind.clone())?;
        let freetext_writer = match plan.freetext_field() {
            Some(name) => Some(ds.field_writer(table, name, FieldKind::IndexedString)?),
            None => None,
        };
        loaders.push(ColumnLoader {
            csv_index: position[plan.source.as_str()],
            buffer: Column::empty_for(&plan.kind),
            freetext: freetext_writer.as_ref().map(|_| Vec::new()),
            stats: ConversionStats {
                field: plan.source.clone(),
                ..Default::default()
            },
            writer: Some(writer),
            freetext_writer,
            plan,
        });
    }

    let result = fill(&mut reader, &mut loaders, job);
    let (rows, peak) = match result {
        Ok(v) => v,
        Err(e) => {
            loaders.iter_mut().for_each(ColumnLoader::abandon);
            return Err(e);
        }
    };
    for loader in &mut loaders {
        if let Some(w) = loader.writer.take() {
            w.finish(ds)?;
        }
        if let Some(w) = loader.freetext_writer.take() {
            w.finish(ds)?;
        }
    }
    Ok(TableImport {
        table: table.to_owned(),
        row_count: rows,
        seconds: started.elapsed().as_secs_f64(),
        peak_buffered_rows: peak,
        fields: loaders.into_iter().map(|l| l.stats).collect(),
    })
}

fn fill<R: Read>(
    reader: &mut csv::Reader<R>,
    loaders: &mut [ColumnLoader],
    job: &ImportJob,
) -> Result<(u64, usize)> {
    let mut record = csv::StringRecord::new();
    let mut rows = 0u64;
    let mut buffered = 0usize;
    let mut peak = 0usize;
    while reader.read_record(&mut record).map_err(csv_error)? {
        rows += 1;
        for loader in loaders.iter_mut() {
            let raw = record.get(loader.csv_index).unwrap_or("");
            loader.push(raw, job.lenient, rows)?;
        }
        buffered += 1;
        peak = peak.max(buffered);
        if buffered == job.chunk_rows {
            for loader in loaders.iter_mut() {
                loader.flush()?;
            }
            buffered = 0;
        }
    }
    if buffered > 0 {
        for loader in loaders.iter_mut() {
            loader.flush()?;
        }
    }
    Ok((rows, peak))
}
