//! The on-disk dataset: a directory holding `dataset.json` plus one
//! directory per table with per-field binary files.
//!
//! ```text
//! <root>/dataset.json
//! <root>/<table>/<field>.dat     values, little-endian, fixed width per kind
//!                                (indexed strings: concatenated UTF-8 bytes)
//! <root>/<table>/<field>.idx     u64 offsets, row_count + 1 entries
//! <root>/<table>/<field>.valid   one byte per row, 0 or 1
//! <root>/<table>/<field>.day     i64 days since the epoch
//! ```
//!
//! Opening a dataset reads only the metadata file and checks file lengths;
//! column data is read on demand, one field and one row range at a time.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::column::{Column, NumericValues};
use crate::error::{Error, Result};
use crate::iostats;
use crate::kind::FieldKind;

pub const FORMAT_VERSION: &str = "1.0.0";
const FORMAT_MAJOR: u64 = 1;
pub const META_FILE: &str = "dataset.json";
const META_TMP: &str = "dataset.json.tmp";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Read,
    ReadWrite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: String,
    pub created_at: DateTime<Utc>,
    pub tables: Vec<TableMeta>,
    pub provenance: Vec<ProvenanceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub name: String,
    pub row_count: u64,
    pub fields: Vec<FieldMeta>,
}

impl TableMeta {
    pub fn field(&self, name: &str) -> Option<&FieldMeta> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    pub row_count: u64,
    /// Length of the `.dat` file in bytes.
    pub data_bytes: u64,
    pub companions: Companions,
}

/// Which companion files exist next to a field's `.dat` file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Companions {
    pub index: bool,
    pub validity: bool,
    pub day: bool,
}

impl Companions {
    pub fn for_kind(kind: &FieldKind) -> Self {
        Companions {
            index: kind.has_index(),
            validity: kind.has_validity(),
            day: kind.has_day(),
        }
    }
}

/// One entry of a dataset's append-only operation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub operation_name: String,
    pub operation_version: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl ProvenanceRecord {
    pub fn new(name: &str, version: &str) -> Self {
        ProvenanceRecord {
            operation_name: name.to_owned(),
            operation_version: version.to_owned(),
            timestamp: Utc::now(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }
}

fn check_name(what: &str, name: &str) -> Result<()> {
    if name.is_empty()
        || name.starts_with('.')
        || name.contains(['/', '\\', '\0'])
        || name == META_FILE
    {
        return Err(Error::Name(format!("invalid {what} name '{name}'")));
    }
    Ok(())
}

fn major_version(version: &str) -> Option<u64> {
    let mut parts = version.split('.');
    let major = parts.next()?.parse().ok()?;
    let rest: Vec<_> = parts.collect();
    if rest.len() != 2 || rest.iter().any(|p| p.parse::<u64>().is_err()) {
        return None;
    }
    Some(major)
}

#[cfg(test)]
thread_local! {
    static FAIL_BEFORE_RENAME: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// A dataset directory. Holds only metadata; fields are read through
/// [`Field`] handles.
#[derive(Debug)]
pub struct Dataset {
    root: PathBuf,
    mode: Mode,
    meta: DatasetMeta,
}

impl Dataset {
    /// Creates a new, empty dataset. `root` must not exist or be an empty
    /// directory.
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.exists() {
            if !root.is_dir() || fs::read_dir(&root)?.next().is_some() {
                return Err(Error::DatasetExists(root));
            }
        } else {
            fs::create_dir_all(&root)?;
        }
        let ds = Dataset {
            root,
            mode: Mode::ReadWrite,
            meta: DatasetMeta {
                format_version: FORMAT_VERSION.to_owned(),
                created_at: Utc::now(),
                tables: Vec::new(),
                provenance: Vec::new(),
            },
        };
        ds.save_meta()?;
        Ok(ds)
    }

    /// Opens an existing dataset, reading its metadata and verifying that
    /// every field file has the length the metadata implies. No column data
    /// is read.
    pub fn open(root: impl AsRef<Path>, mode: Mode) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Format(format!("no {META_FILE} in {}", root.display()))
            }
            _ => Error::Io(e),
        })?;
        let raw: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let version = raw
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("missing format_version".into()))?;
        match major_version(version) {
            Some(FORMAT_MAJOR) => {}
            Some(_) => {
                return Err(Error::Version {
                    found: version.to_owned(),
                    supported: FORMAT_MAJOR,
                })
            }
            None => {
                return Err(Error::Format(format!(
                    "format_version '{version}' is not a semantic version"
                )))
            }
        }
        let meta: DatasetMeta = serde_json::from_value(raw)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let ds = Dataset { root, mode, meta };
        ds.verify()?;
        Ok(ds)
    }

    fn verify(&self) -> Result<()> {
        for table in &self.meta.tables {
            check_name("table", &table.name)?;
            let dir = self.root.join(&table.name);
            for field in &table.fields {
                check_name("field", &field.name)?;
                field.kind.validate()?;
                let fail = |detail: String| Err(Error::integrity(&table.name, &field.name, detail));
                if field.row_count != table.row_count {
                    return fail(format!(
                        "{} rows but the table has {}",
                        field.row_count, table.row_count
                    ));
                }
                if field.companions != Companions::for_kind(&field.kind) {
                    return fail("companion files disagree with the field kind".into());
                }
                let n = field.row_count;
                let mut expected = vec![(
                    "dat",
                    match field.kind.value_width() {
                        Some(w) => n * w as u64,
                        None => field.data_bytes,
                    },
                )];
                if field.data_bytes != expected[0].1 {
                    return fail(format!(
                        "data_bytes {} disagrees with {} rows",
                        field.data_bytes, n
                    ));
                }
                if field.companions.index {
                    expected.push(("idx", (n + 1) * 8));
                }
                if field.companions.validity {
                    expected.push(("valid", n));
                }
                if field.companions.day {
                    expected.push(("day", n * 8));
                }
                for (ext, len) in expected {
                    let path = dir.join(format!("{}.{ext}", field.name));
                    match fs::metadata(&path) {
                        Ok(m) if m.len() == len => {}
                        Ok(m) => {
                            return fail(format!(
                                "{} has {} bytes, expected {len}",
                                path.display(),
                                m.len()
                            ))
                        }
                        Err(_) => return fail(format!("{} is missing", path.display())),
                    }
                }
            }
        }
        Ok(())
    }

    fn save_meta(&self) -> Result<()> {
        let tmp = self.root.join(META_TMP);
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, &self.meta)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        #[cfg(test)]
        if FAIL_BEFORE_RENAME.with(|f| f.get()) {
            return Err(Error::Io(std::io::Error::other("injected failure")));
        }
        fs::rename(&tmp, self.root.join(META_FILE))?;
        Ok(())
    }

    /// Applies `change` to a copy of the metadata and persists it; the
    /// in-memory metadata only changes once the new file is in place.
    fn update_meta(&mut self, change: impl FnOnce(&mut DatasetMeta) -> Result<()>) -> Result<()> {
        self.require_writable()?;
        let previous = self.meta.clone();
        change(&mut self.meta)?;
        if let Err(e) = self.save_meta() {
            self.meta = previous;
            return Err(e);
        }
        Ok(())
    }

    fn require_writable(&self) -> Result<()> {
        if self.mode != Mode::ReadWrite {
            return Err(Error::Permission(format!(
                "{} is open read-only",
                self.root.display()
            )));
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn provenance(&self) -> &[ProvenanceRecord] {
        &self.meta.provenance
    }

    pub fn table_names(&self) -> Vec<&str> {
        self.meta.tables.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.meta.tables.iter().any(|t| t.name == name)
    }

    pub fn table(&self, name: &str) -> Result<&TableMeta> {
        self.meta
            .tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Name(format!("no table '{name}'")))
    }

    pub fn create_table(&mut self, name: &str) -> Result<()> {
        check_name("table", name)?;
        if self.has_table(name) {
            return Err(Error::Name(format!("table '{name}' already exists")));
        }
        self.require_writable()?;
        fs::create_dir_all(self.root.join(name))?;
        self.update_meta(|m| {
            m.tables.push(TableMeta {
                name: name.to_owned(),
                row_count: 0,
                fields: Vec::new(),
            });
            Ok(())
        })
    }

    /// A handle for reading one field.
    pub fn field(&self, table: &str, name: &str) -> Result<Field> {
        let t = self.table(table)?;
        let meta = t
            .field(name)
            .ok_or_else(|| Error::Name(format!("no field '{name}' in table '{table}'")))?
            .clone();
        Ok(Field {
            table: table.to_owned(),
            dir: self.root.join(table),
            meta,
        })
    }

    pub fn fields(&self, table: &str) -> Result<Vec<Field>> {
        let t = self.table(table)?;
        t.fields
            .iter()
            .map(|f| self.field(table, &f.name))
            .collect()
    }

    /// Starts writing a new field. The field becomes visible once the writer
    /// is finished with [`FieldWriter::finish`].
    pub fn field_writer(&self, table: &str, name: &str, kind: FieldKind) -> Result<FieldWriter> {
        self.require_writable()?;
        check_name("field", name)?;
        kind.validate()?;
        let t = self.table(table)?;
        if t.field(name).is_some() {
            return Err(Error::Name(format!(
                "field '{name}' already exists in table '{table}'"
            )));
        }
        FieldWriter::create(&self.root.join(table), table, name, kind)
    }

    /// Writes a whole field from one column.
    pub fn write_field(
        &mut self,
        table: &str,
        name: &str,
        kind: FieldKind,
        values: &Column,
    ) -> Result<Field> {
        let mut w = self.field_writer(table, name, kind)?;
        if let Err(e) = w.write(values) {
            w.abandon();
            return Err(e);
        }
        w.finish(self)
    }

    fn commit_field(&mut self, table: &str, meta: FieldMeta) -> Result<()> {
        self.update_meta(|m| {
            let t = m
                .tables
                .iter_mut()
                .find(|t| t.name == table)
                .ok_or_else(|| Error::Name(format!("no table '{table}'")))?;
            if t.field(&meta.name).is_some() {
                return Err(Error::Name(format!(
                    "field '{}' already exists in table '{table}'",
                    meta.name
                )));
            }
            if t.fields.is_empty() {
                t.row_count = meta.row_count;
            } else if t.row_count != meta.row_count {
                return Err(Error::Shape(format!(
                    "field '{}' has {} rows but table '{table}' has {}",
                    meta.name, meta.row_count, t.row_count
                )));
            }
            t.fields.push(meta);
            Ok(())
        })
    }

    /// Appends a provenance record. Existing records are never rewritten.
    pub fn append_provenance(&mut self, record: ProvenanceRecord) -> Result<()> {
        self.update_meta(|m| {
            m.provenance.push(record);
            Ok(())
        })
    }
}

fn read_exact_at(path: &Path, file: &mut File, offset: u64, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    if len > 0 {
        file.seek(SeekFrom::Start(offset))?;
        file.read_exact(&mut buf)?;
    }
    iostats::record(path, len as u64);
    Ok(buf)
}

fn read_file_range(path: &Path, offset: u64, len: usize) -> Result<Vec<u8>> {
    let mut f = File::open(path)?;
    read_exact_at(path, &mut f, offset, len)
}

/// A read handle on one stored field.
#[derive(Clone, Debug)]
pub struct Field {
    table: String,
    dir: PathBuf,
    meta: FieldMeta,
}

impl Field {
    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn table(&self) -> &str {
        &self.table
    }

    pub fn kind(&self) -> &FieldKind {
        &self.meta.kind
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn row_count(&self) -> u64 {
        self.meta.row_count
    }

    pub fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.meta.name))
    }

    /// Every file backing this field.
    pub fn files(&self) -> Vec<PathBuf> {
        let c = self.meta.companions;
        let mut out = vec![self.path("dat")];
        if c.index {
            out.push(self.path("idx"));
        }
        if c.validity {
            out.push(self.path("valid"));
        }
        if c.day {
            out.push(self.path("day"));
        }
        out
    }

    fn integrity(&self, detail: impl Into<String>) -> Error {
        Error::integrity(&self.table, &self.meta.name, detail)
    }

    /// Reads `count` rows starting at `start`. Bytes read are proportional
    /// to `count`.
    pub fn read(&self, start: u64, count: u64) -> Result<Column> {
        let n = self.meta.row_count;
        if start.checked_add(count).is_none_or(|end| end > n) {
            return Err(Error::Bounds {
                start,
                count,
                len: n,
            });
        }
        let validity = if self.meta.companions.validity {
            Some(self.read_validity(start, count)?)
        } else {
            None
        };
        Ok(match &self.meta.kind {
            FieldKind::FixedString { length } => {
                let bytes = read_file_range(
                    &self.path("dat"),
                    start * *length as u64,
                    (count as usize) * length,
                )?;
                let values = bytes
                    .chunks_exact(*length)
                    .map(|c| {
                        let end = c.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
                        String::from_utf8(c[..end].to_vec())
                            .map_err(|_| self.integrity("fixed string is not UTF-8"))
                    })
                    .collect::<Result<_>>()?;
                Column::FixedString(values)
            }
            FieldKind::IndexedString => {
                let offsets = self.read_offsets(start, count)?;
                let lo = offsets[0];
                let hi = *offsets.last().expect("count + 1 offsets");
                if hi < lo || hi > self.meta.data_bytes {
                    return Err(self.integrity("offsets out of range"));
                }
                let blob = read_file_range(&self.path("dat"), lo, (hi - lo) as usize)?;
                let mut values = Vec::with_capacity(count as usize);
                for w in offsets.windows(2) {
                    if w[1] < w[0] {
                        return Err(self.integrity("offsets decrease"));
                    }
                    let s = &blob[(w[0] - lo) as usize..(w[1] - lo) as usize];
                    values.push(
                        std::str::from_utf8(s)
                            .map_err(|_| self.integrity("string is not UTF-8"))?
                            .to_owned(),
                    );
                }
                Column::IndexedString(values)
            }
            FieldKind::Numeric { value_type, .. } => {
                let w = value_type.width();
                let bytes =
                    read_file_range(&self.path("dat"), start * w as u64, count as usize * w)?;
                Column::Numeric {
                    values: NumericValues::decode(*value_type, &bytes),
                    validity,
                }
            }
            FieldKind::Categorical { value_type, .. } => {
                let w = value_type.width();
                let bytes =
                    read_file_range(&self.path("dat"), start * w as u64, count as usize * w)?;
                Column::Categorical(NumericValues::decode(*value_type, &bytes))
            }
            FieldKind::DateTime { .. } => {
                let bytes = read_file_range(&self.path("dat"), start * 8, count as usize * 8)?;
                let days = if self.meta.companions.day {
                    let b = read_file_range(&self.path("day"), start * 8, count as usize * 8)?;
                    Some(crate::kind::NativeType::decode(&b))
                } else {
                    None
                };
                Column::DateTime {
                    values: crate::kind::NativeType::decode(&bytes),
                    validity,
                    days,
                }
            }
        })
    }

    pub fn read_all(&self) -> Result<Column> {
        self.read(0, self.meta.row_count)
    }

    /// `count + 1` offsets into the string blob.
    pub fn read_offsets(&self, start: u64, count: u64) -> Result<Vec<u64>> {
        let bytes = read_file_range(&self.path("idx"), start * 8, (count as usize + 1) * 8)?;
        Ok(crate::kind::NativeType::decode(&bytes))
    }

    fn read_validity(&self, start: u64, count: u64) -> Result<Vec<bool>> {
        let bytes = read_file_range(&self.path("valid"), start, count as usize)?;
        bytes
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(self.integrity(format!("validity byte {other}"))),
            })
            .collect()
    }

    /// Sequential reader yielding at most `chunk_rows` rows at a time.
    pub fn cursor(&self, chunk_rows: u64) -> ChunkCursor<'_> {
        ChunkCursor {
            source: self,
            position: 0,
            chunk_rows: chunk_rows.max(1),
        }
    }
}

/// Anything rows can be read from by range: stored fields and in-memory
/// columns.
pub trait ColumnSource {
    fn row_count(&self) -> u64;
    fn read_rows(&self, start: u64, count: u64) -> Result<Column>;

    fn describe(&self) -> String {
        "column".to_owned()
    }
}

impl ColumnSource for Field {
    fn row_count(&self) -> u64 {
        self.meta.row_count
    }

    fn read_rows(&self, start: u64, count: u64) -> Result<Column> {
        self.read(start, count)
    }

    fn describe(&self) -> String {
        format!("{}.{}", self.table, self.meta.name)
    }
}

impl ColumnSource for Column {
    fn row_count(&self) -> u64 {
        self.len() as u64
    }

    fn read_rows(&self, start: u64, count: u64) -> Result<Column> {
        let n = self.len() as u64;
        if start.checked_add(count).is_none_or(|end| end > n) {
            return Err(Error::Bounds {
                start,
                count,
                len: n,
            });
        }
        Ok(self.slice(start as usize, count as usize))
    }
}

impl<T: ColumnSource + ?Sized> ColumnSource for &T {
    fn row_count(&self) -> u64 {
        (**self).row_count()
    }

    fn read_rows(&self, start: u64, count: u64) -> Result<Column> {
        (**self).read_rows(start, count)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Reads a source front to back in chunks of at most `chunk_rows` rows.
pub struct ChunkCursor<'a> {
    source: &'a dyn ColumnSource,
    position: u64,
    chunk_rows: u64,
}

impl<'a> ChunkCursor<'a> {
    pub fn new(source: &'a dyn ColumnSource, chunk_rows: u64) -> Self {
        ChunkCursor {
            source,
            position: 0,
            chunk_rows: chunk_rows.max(1),
        }
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn chunk_rows(&self) -> u64 {
        self.chunk_rows
    }
}

impl Iterator for ChunkCursor<'_> {
    type Item = Result<Column>;

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.source.row_count();
        if self.position >= n {
            return None;
        }
        let count = self.chunk_rows.min(n - self.position);
        let out = self.source.read_rows(self.position, count);
        self.position += count;
        Some(out)
    }
}

/// Streams chunks of one field into its files.
pub struct FieldWriter {
    table: String,
    dir: PathBuf,
    name: String,
    kind: FieldKind,
    dat: BufWriter<File>,
    idx: Option<BufWriter<File>>,
    valid: Option<BufWriter<File>>,
    day: Option<BufWriter<File>>,
    rows: u64,
    data_bytes: u64,
    scratch: Vec<u8>,
}

impl FieldWriter {
    fn create(dir: &Path, table: &str, name: &str, kind: FieldKind) -> Result<Self> {
        let open = |ext: &str| -> Result<BufWriter<File>> {
            let f = OpenOptions::new()
                .write(true)
                .create(true)
                .truncate(true)
                .open(dir.join(format!("{name}.{ext}")))?;
            Ok(BufWriter::with_capacity(1 << 16, f))
        };
        let c = Companions::for_kind(&kind);
        let mut idx = if c.index { Some(open("idx")?) } else { None };
        if let Some(idx) = &mut idx {
            idx.write_all(&0u64.to_le_bytes())?;
        }
        Ok(FieldWriter {
            table: table.to_owned(),
            dir: dir.to_path_buf(),
            name: name.to_owned(),
            dat: open("dat")?,
            idx,
            valid: if c.validity {
                Some(open("valid")?)
            } else {
                None
            },
            day: if c.day { Some(open("day")?) } else { None },
            kind,
            rows: 0,
            data_bytes: 0,
            scratch: Vec::new(),
        })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn rows_written(&self) -> u64 {
        self.rows
    }

    /// Appends a chunk, which must match the field's kind.
    pub fn write(&mut self, chunk: &Column) -> Result<()> {
        chunk.check_kind(&self.kind)?;
        let buf = &mut self.scratch;
        buf.clear();
        match chunk {
            Column::FixedString(values) => {
                let length = self.kind.value_width().expect("fixed width");
                for s in values {
                    buf.extend_from_slice(s.as_bytes());
                    buf.resize(buf.len() + length - s.len(), 0);
                }
            }
            Column::IndexedString(values) => {
                let idx = self.idx.as_mut().expect("indexed strings have offsets");
                let mut offset = self.data_bytes;
                let mut offsets = Vec::with_capacity(values.len() * 8);
                for s in values {
                    buf.extend_from_slice(s.as_bytes());
                    offset += s.len() as u64;
                    offsets.extend_from_slice(&offset.to_le_bytes());
                }
                idx.write_all(&offsets)?;
            }
            Column::Numeric { values, .. } | Column::Categorical(values) => values.encode(buf),
            Column::DateTime { values, days, .. } => {
                crate::kind::NativeType::encode(values, buf);
                if let (Some(out), Some(days)) = (self.day.as_mut(), days) {
                    let mut b = Vec::with_capacity(days.len() * 8);
                    crate::kind::NativeType::encode(days, &mut b);
                    out.write_all(&b)?;
                }
            }
        }
        if let (Some(out), Some(validity)) = (self.valid.as_mut(), chunk.validity()) {
            let b: Vec<u8> = validity.iter().map(|&v| v as u8).collect();
            out.write_all(&b)?;
        }
        self.dat.write_all(buf)?;
        self.data_bytes += buf.len() as u64;
        self.rows += chunk.len() as u64;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.dat.flush()?;
        for w in [&mut self.idx, &mut self.valid, &mut self.day]
            .into_iter()
            .flatten()
        {
            w.flush()?;
        }
        Ok(())
    }

    fn file_paths(&self) -> Vec<PathBuf> {
        ["dat", "idx", "valid", "day"]
            .iter()
            .map(|ext| self.dir.join(format!("{}.{ext}", self.name)))
            .collect()
    }

    /// Deletes whatever was written so far.
    pub fn abandon(self) {
        let paths = self.file_paths();
        drop(self);
        for p in paths {
            let _ = fs::remove_file(p);
        }
    }

    /// Flushes the files and registers the field in the dataset metadata.
    pub fn finish(mut self, ds: &mut Dataset) -> Result<Field> {
        if let Err(e) = self.flush() {
            self.abandon();
            return Err(e);
        }
        let meta = FieldMeta {
            name: self.name.clone(),
            companions: Companions::for_kind(&self.kind),
            kind: self.kind.clone(),
            row_count: self.rows,
            data_bytes: self.data_bytes,
        };
        let table = self.table.clone();
        let dir = self.dir.clone();
        let paths = self.file_paths();
        drop(self);
        if let Err(e) = ds.commit_field(&table, meta.clone()) {
            if !matches!(e, Error::Name(_)) {
                for p in paths {
                    let _ = fs::remove_file(p);
                }
            }
            return Err(e);
        }
        Ok(Field { table, dir, meta })
    }
}

/// Sink for chunks produced by streaming operations.
pub trait ColumnSink {
    fn push(&mut self, chunk: &Column) -> Result<()>;
}

impl ColumnSink for FieldWriter {
    fn push(&mut self, chunk: &Column) -> Result<()> {
        self.write(chunk)
    }
}

/// Collects chunks into a single in-memory column.
impl ColumnSink for Option<Column> {
    fn push(&mut self, chunk: &Column) -> Result<()> {
        match self {
            Some(c) => c.append(chunk),
            None => {
                *self = Some(chunk.clone());
                Ok(())
            }
        }
    }
}
