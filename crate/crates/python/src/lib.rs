//! Python bindings: datasets, CSV import and export, sorting, ordered joins,
//! span aggregation and journaling.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use colcur_core::journal::JournalOptions;
use colcur_core::merging::write_mapped;
use colcur_core::ordering::apply_permutation;
use colcur_core::store::{Mode, ProvenanceRecord};
use colcur_core::{
    argsort_stable, bucket_spans, get_spans, journal_table, multi_key_argsort, ordered_map_left,
    span_reduce, Column, ColumnSource, Error, FieldKind, ImportJob, NumericValues, Reducer, Value,
    ValueType, INVALID_ROW,
};

create_exception!(colcur, ColcurError, PyException);
create_exception!(colcur, IntegrityError, ColcurError);

const BINDING_VERSION: &str = env!("CARGO_PKG_VERSION");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Integrity { .. } => IntegrityError::new_err(e.to_string()),
        other => ColcurError::new_err(other.to_string()),
    }
}

fn value_to_py<'py>(py: Python<'py>, v: Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Int(x) => x.into_pyobject(py)?.into_any(),
        Value::UInt(x) => x.into_pyobject(py)?.into_any(),
        Value::Float(x) => x.into_pyobject(py)?.into_any(),
        Value::Bool(x) => x.into_pyobject(py)?.to_owned().into_any(),
        Value::Str(x) => x.into_pyobject(py)?.into_any(),
    })
}

/// Cells as a list, `None` for invalid rows.
fn column_to_list<'py>(py: Python<'py>, col: &Column) -> PyResult<Bound<'py, PyList>> {
    let list = PyList::empty(py);
    for cell in col.cells() {
        if cell.valid {
            list.append(value_to_py(py, cell.value)?)?;
        } else {
            list.append(py.None())?;
        }
    }
    Ok(list)
}

/// Builds a column from a Python sequence. `value_type` is a numeric type
/// name or `"string"`; `None` entries make a numeric column optional.
fn list_to_column(values: &Bound<'_, PyAny>, value_type: &str) -> PyResult<(Column, FieldKind)> {
    if value_type == "string" {
        let v: Vec<String> = values.extract()?;
        return Ok((Column::indexed(v), FieldKind::IndexedString));
    }
    let vt: ValueType = value_type.parse().map_err(to_py)?;
    let items: Vec<Option<Bound<'_, PyAny>>> = values.extract()?;
    let mut out = NumericValues::with_capacity(vt, items.len());
    let mut validity = Vec::with_capacity(items.len());
    for item in &items {
        let value = match item {
            None => None,
            Some(x) if vt == ValueType::Bool => Some(Value::Bool(x.extract()?)),
            Some(x) if vt.is_float() => Some(Value::Float(x.extract()?)),
            Some(x) => Some(Value::Int(x.extract()?)),
        };
        match value {
            Some(v) => out.push_value(&v).map_err(to_py)?,
            None => out.push_zero(),
        }
        validity.push(item.is_some());
    }
    let has_validity = validity.iter().any(|v| !v);
    let kind = FieldKind::Numeric {
        value_type: vt,
        has_validity,
    };
    Ok((
        Column::Numeric {
            values: out,
            validity: has_validity.then_some(validity),
        },
        kind,
    ))
}

#[pyclass(name = "Dataset", module = "colcur")]
struct PyDataset {
    inner: colcur_core::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Creates a new, empty dataset directory.
    #[staticmethod]
    fn create(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: colcur_core::Dataset::create(path).map_err(to_py)?,
        })
    }

    /// Opens an existing dataset, verifying every field's files.
    #[staticmethod]
    #[pyo3(signature = (path, writable = false))]
    fn open(path: PathBuf, writable: bool) -> PyResult<Self> {
        let mode = if writable {
            Mode::ReadWrite
        } else {
            Mode::Read
        };
        Ok(PyDataset {
            inner: colcur_core::Dataset::open(path, mode).map_err(to_py)?,
        })
    }

    fn tables(&self) -> Vec<String> {
        self.inner
            .table_names()
            .into_iter()
            .map(str::to_owned)
            .collect()
    }

    fn fields(&self, table: &str) -> PyResult<Vec<String>> {
        let meta = self.inner.table(table).map_err(to_py)?;
        Ok(meta.fields.iter().map(|f| f.name.clone()).collect())
    }

    fn row_count(&self, table: &str) -> PyResult<u64> {
        Ok(self.inner.table(table).map_err(to_py)?.row_count)
    }

    fn kind(&self, table: &str, field: &str) -> PyResult<String> {
        let f = self.inner.field(table, field).map_err(to_py)?;
        Ok(f.kind().tag().to_owned())
    }

    #[pyo3(signature = (table, field, start = 0, count = None))]
    fn read<'py>(
        &self,
        py: Python<'py>,
        table: &str,
        field: &str,
        start: u64,
        count: Option<u64>,
    ) -> PyResult<Bound<'py, PyList>> {
        let f = self.inner.field(table, field).map_err(to_py)?;
        let count = count.unwrap_or(f.row_count().saturating_sub(start));
        column_to_list(py, &f.read(start, count).map_err(to_py)?)
    }

    /// Writes a whole field, creating the table if needed.
    #[pyo3(signature = (table, field, values, value_type = "int64"))]
    fn write(
        &mut self,
        table: &str,
        field: &str,
        values: &Bound<'_, PyAny>,
        value_type: &str,
    ) -> PyResult<()> {
        let (column, kind) = list_to_column(values, value_type)?;
        if !self.inner.has_table(table) {
            self.inner.create_table(table).map_err(to_py)?;
        }
        self.inner
            .write_field(table, field, kind, &column)
            .map_err(to_py)?;
        Ok(())
    }

    /// Imports `{table: csv_path}` using a JSON schema file. Returns rows
    /// imported per table.
    #[pyo3(signature = (schema_path, inputs, lenient = false))]
    fn import_csv(
        &mut self,
        schema_path: PathBuf,
        inputs: BTreeMap<String, PathBuf>,
        lenient: bool,
    ) -> PyResult<BTreeMap<String, u64>> {
        let text = std::fs::read_to_string(schema_path).map_err(|e| to_py(e.into()))?;
        let mut job = ImportJob::new(colcur_core::parse_schema(&text).map_err(to_py)?);
        job.inputs = inputs.into_iter().collect();
        job.lenient = lenient;
        let done = colcur_core::import_csv(&mut self.inner, &job).map_err(to_py)?;
        Ok(done.into_iter().map(|t| (t.table, t.row_count)).collect())
    }

    #[pyo3(signature = (table, path, fields = None))]
    fn export_csv(&self, table: &str, path: PathBuf, fields: Option<Vec<String>>) -> PyResult<u64> {
        let file = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        colcur_core::export_csv(
            &self.inner,
            table,
            fields.as_deref(),
            std::io::BufWriter::new(file),
        )
        .map_err(to_py)
    }

    /// Sort order of `table` by `keys` (most significant first). With
    /// `output_table`, also writes every field reordered there.
    #[pyo3(signature = (table, keys, output_table = None))]
    fn sort(
        &mut self,
        table: &str,
        keys: Vec<String>,
        output_table: Option<&str>,
    ) -> PyResult<Vec<u64>> {
        let fields = keys
            .iter()
            .map(|k| self.inner.field(table, k))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        let sources: Vec<&dyn ColumnSource> = fields.iter().map(|f| f as _).collect();
        let perm = multi_key_argsort(&sources).map_err(to_py)?;
        if let Some(out) = output_table {
            let all = self.inner.fields(table).map_err(to_py)?;
            apply_permutation(&mut self.inner, &perm, &all, out).map_err(to_py)?;
            self.inner
                .append_provenance(
                    ProvenanceRecord::new("sort", BINDING_VERSION)
                        .param("table", table)
                        .param("keys", keys.join(","))
                        .param("output_table", out),
                )
                .map_err(to_py)?;
        }
        Ok(perm.into_order())
    }

    /// Left-joins `right_fields` onto the left table's rows through sorted
    /// keys, writing them to `output_table`. Returns the matched row count.
    fn left_join(
        &mut self,
        left: &str,
        left_key: &str,
        right: &str,
        right_key: &str,
        right_fields: Vec<String>,
        output_table: &str,
    ) -> PyResult<usize> {
        let lk = self.inner.field(left, left_key).map_err(to_py)?;
        let rk = self.inner.field(right, right_key).map_err(to_py)?;
        let map = ordered_map_left(&lk, &rk).map_err(to_py)?;
        let data = right_fields
            .iter()
            .map(|f| self.inner.field(right, f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        write_mapped(
            &mut self.inner,
            &map.left_to_right,
            &data,
            true,
            output_table,
            "",
        )
        .map_err(to_py)?;
        Ok(map.matched())
    }

    /// Reduces `field` over runs of equal `key` (or day buckets) and returns
    /// the reduced values.
    #[pyo3(signature = (table, key, field, reducer, bucket_days = None))]
    fn aggregate<'py>(
        &self,
        py: Python<'py>,
        table: &str,
        key: &str,
        field: &str,
        reducer: &str,
        bucket_days: Option<i64>,
    ) -> PyResult<Bound<'py, PyList>> {
        let k = self.inner.field(table, key).map_err(to_py)?;
        let v = self.inner.field(table, field).map_err(to_py)?;
        let reducer: Reducer = reducer.parse().map_err(to_py)?;
        let spans = match bucket_days {
            Some(d) => bucket_spans(&k, d),
            None => get_spans(&k),
        }
        .map_err(to_py)?;
        column_to_list(py, &span_reduce(&spans, &v, reducer).map_err(to_py)?)
    }

    fn provenance(&self) -> Vec<(String, BTreeMap<String, String>)> {
        self.inner
            .provenance()
            .iter()
            .map(|p| (p.operation_name.clone(), p.parameters.clone()))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, tables={:?})",
            self.inner.root().display(),
            self.inner.table_names()
        )
    }
}

/// Stable sort order of a list of ints, floats or strings.
#[pyfunction]
fn argsort(values: &Bound<'_, PyAny>) -> PyResult<Vec<u64>> {
    let column = if let Ok(v) = values.extract::<Vec<i64>>() {
        Column::numeric(v)
    } else if let Ok(v) = values.extract::<Vec<f64>>() {
        Column::numeric(v)
    } else {
        Column::indexed(values.extract::<Vec<String>>()?)
    };
    Ok(argsort_stable(&column).into_order())
}

/// For each sorted left key, the row of the equal unique right key or `None`.
#[pyfunction]
fn left_map(left_fk: Vec<i64>, right_pk: Vec<i64>) -> PyResult<Vec<Option<u64>>> {
    let map =
        ordered_map_left(&Column::numeric(left_fk), &Column::numeric(right_pk)).map_err(to_py)?;
    Ok(map
        .left_to_right
        .into_iter()
        .map(|j| (j != INVALID_ROW).then_some(j))
        .collect())
}

/// Span boundaries of a sorted key list.
#[pyfunction]
fn spans(keys: Vec<i64>) -> PyResult<Vec<u64>> {
    Ok(get_spans(&Column::numeric(keys))
        .map_err(to_py)?
        .boundaries()
        .to_vec())
}

/// Journals table(s) of snapshot `old` against `new` into a new dataset at
/// `output`. Returns the per-table counts.
#[pyfunction]
#[pyo3(signature = (old, new, output, keys, t_old, t_new, tables = None, close_only_old = false))]
#[allow(clippy::too_many_arguments)]
fn journal<'py>(
    py: Python<'py>,
    old: PathBuf,
    new: PathBuf,
    output: PathBuf,
    keys: Vec<String>,
    t_old: f64,
    t_new: f64,
    tables: Option<Vec<String>>,
    close_only_old: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let o = colcur_core::Dataset::open(old, Mode::Read).map_err(to_py)?;
    let n = colcur_core::Dataset::open(new, Mode::Read).map_err(to_py)?;
    let tables = tables.unwrap_or_else(|| {
        o.table_names()
            .into_iter()
            .filter(|t| n.has_table(t))
            .map(str::to_owned)
            .collect()
    });
    let mut out = colcur_core::Dataset::create(output).map_err(to_py)?;
    let options = JournalOptions {
        key_fields: keys,
        t_old,
        t_new,
        close_only_old,
    };
    let result = PyDict::new(py);
    for t in &tables {
        let r = journal_table(&o, t, &n, t, &mut out, t, &options).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("rows_only_old", r.rows_only_old)?;
        d.set_item("rows_only_new", r.rows_only_new)?;
        d.set_item("rows_updated", r.rows_updated)?;
        d.set_item("rows_not_updated", r.rows_not_updated)?;
        d.set_item("journaled_row_count", r.journaled_row_count)?;
        result.set_item(t, d)?;
    }
    Ok(result)
}

#[pymodule]
fn colcur(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", BINDING_VERSION)?;
    m.add("ColcurError", m.py().get_type::<ColcurError>())?;
    m.add("IntegrityError", m.py().get_type::<IntegrityError>())?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(argsort, m)?)?;
    m.add_function(wrap_pyfunction!(left_map, m)?)?;
    m.add_function(wrap_pyfunction!(spans, m)?)?;
    m.add_function(wrap_pyfunction!(journal, m)?)?;
    Ok(())
}
