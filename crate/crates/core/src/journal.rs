//! Journaling: merging two snapshots of a table into one table that keeps
//! every version of a row, each stamped with the interval it was current.

use std::cmp::Ordering;
use std::time::Instant;

use crate::column::{Column, ColumnBuilder};
use crate::error::{Error, Result};
use crate::kind::{FieldKind, ValueType};
use crate::store::{Dataset, Field, FieldWriter, ProvenanceRecord};

pub const JOURNAL_VERSION: &str = "1.0.0";
pub const VALID_FROM: &str = "j_valid_from";
pub const VALID_TO: &str = "j_valid_to";
/// `j_valid_to` of a version that is still current.
pub const OPEN: f64 = f64::MAX;
pub const JOURNAL_CHUNK_ROWS: u64 = 1 << 14;

#[derive(Clone, Debug)]
pub struct JournalOptions {
    pub key_fields: Vec<String>,
    pub t_old: f64,
    pub t_new: f64,
    /// Close keys missing from the new snapshot at `t_new` instead of
    /// leaving them open.
    pub close_only_old: bool,
}

impl JournalOptions {
    pub fn new(key_fields: &[&str], t_old: f64, t_new: f64) -> Self {
        JournalOptions {
            key_fields: key_fields.iter().map(|k| k.to_string()).collect(),
            t_old,
            t_new,
            close_only_old: false,
        }
    }
}

/// Per-key classification counts. Keys are counted once each, so
/// `only_old + updated + not_updated` is the number of current old rows.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JournalResult {
    pub old_row_count: u64,
    pub new_row_count: u64,
    pub rows_only_old: u64,
    pub rows_only_new: u64,
    pub rows_updated: u64,
    pub rows_not_updated: u64,
    pub journaled_row_count: u64,
}

/// Row equality for journaling: invalid rows match whatever their payload,
/// floats compare bitwise. Kinds may differ only in their validity companion.
pub fn field_rows_equal(
    kind_a: &FieldKind,
    a: &Column,
    i: usize,
    kind_b: &FieldKind,
    b: &Column,
    j: usize,
) -> Result<bool> {
    merged_kind(kind_a, kind_b)?;
    Ok(a.rows_equal(i, b, j))
}

/// The kind that holds rows of both `a` and `b`.
fn merged_kind(a: &FieldKind, b: &FieldKind) -> Result<FieldKind> {
    if a == b {
        return Ok(a.clone());
    }
    match (a, b) {
        (
            FieldKind::DateTime {
                has_day: da,
                has_validity: va,
            },
            FieldKind::DateTime {
                has_day: db,
                has_validity: vb,
            },
        ) => Ok(FieldKind::DateTime {
            has_day: *da || *db,
            has_validity: *va || *vb,
        }),
        _ if a.with_validity() == b.with_validity() => Ok(a.with_validity()),
        _ => Err(Error::Type(format!(
            "field kinds differ between snapshots: {} vs {}",
            a.tag(),
            b.tag()
        ))),
    }
}

/// Rows of one snapshot, read in aligned chunks across all its fields.
struct Side {
    fields: Vec<Field>,
    keys: Vec<usize>,
    stamps: Option<(usize, usize)>,
    chunk: Vec<Column>,
    start: u64,
    pos: usize,
    rows: u64,
    previous_keys: Option<Vec<Column>>,
    previous_open: bool,
    label: &'static str,
}

impl Side {
    fn new(fields: Vec<Field>, key_names: &[String], label: &'static str) -> Result<Self> {
        let find = |n: &str| fields.iter().position(|f| f.name() == n);
        let keys = key_names
            .iter()
            .map(|k| {
                find(k).ok_or_else(|| {
                    Error::Schema(format!("{label} snapshot has no key field '{k}'"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let stamps = match (find(VALID_FROM), find(VALID_TO)) {
            (Some(f), Some(t)) => {
                for i in [f, t] {
                    if fields[i].kind() != &FieldKind::numeric(ValueType::Float64) {
                        return Err(Error::Schema(format!(
                            "{label} stamp field '{}' must be float64",
                            fields[i].name()
                        )));
                    }
                }
                Some((f, t))
            }
            (None, None) => None,
            _ => {
                return Err(Error::Schema(format!(
                    "{label} snapshot has only one of {VALID_FROM} and {VALID_TO}"
                )))
            }
        };
        let rows = fields.first().map_or(0, Field::row_count);
        let mut side = Side {
            fields,
            keys,
            stamps,
            chunk: Vec::new(),
            start: 0,
            pos: 0,
            rows,
            previous_keys: None,
            previous_open: false,
            label,
        };
        side.load(0)?;
        Ok(side)
    }

    fn load(&mut self, start: u64) -> Result<()> {
        let count = JOURNAL_CHUNK_ROWS.min(self.rows.saturating_sub(start));
        self.chunk = self
            .fields
            .iter()
            .map(|f| f.read(start, count))
            .collect::<Result<_>>()?;
        self.start = start;
        self.pos = 0;
        Ok(())
    }

    fn row(&self) -> u64 {
        self.start + self.pos as u64
    }

    fn done(&self) -> bool {
        self.row() >= self.rows
    }

    fn is_open(&self) -> bool {
        match self.stamps {
            Some((_, to)) => match &self.chunk[to] {
                Column::Numeric { values, .. } => values.get(self.pos) == crate::Value::Float(OPEN),
                _ => unreachable!("stamp kind checked"),
            },
            None => true,
        }
    }

    fn cmp_keys(&self, other: &Side) -> Ordering {
        for (&a, &b) in self.keys.iter().zip(&other.keys) {
            let ord = self.chunk[a].cmp_rows(self.pos, &other.chunk[b], other.pos);
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }

    /// Checks the current row's key against the row before it.
    fn check_order(&self) -> Result<()> {
        let Some(prev) = &self.previous_keys else {
            return Ok(());
        };
        let mut ord = Ordering::Equal;
        for (k, &f) in self.keys.iter().enumerate() {
            ord = self.chunk[f].cmp_rows(self.pos, &prev[k], 0);
            if ord != Ordering::Equal {
                break;
            }
        }
        let row = self.row();
        match ord {
            Ordering::Greater => Ok(()),
            Ordering::Less => Err(Error::Precondition(format!(
                "{} snapshot is not sorted by key at row {row}",
                self.label
            ))),
            // earlier versions of a journaled key may repeat it
            Ordering::Equal if self.stamps.is_some() && !self.previous_open => Ok(()),
            Ordering::Equal => Err(Error::Precondition(format!(
                "{} snapshot repeats a key at row {row}",
                self.label
            ))),
        }
    }

    fn advance(&mut self) -> Result<()> {
        self.previous_keys = Some(
            self.keys
                .iter()
                .map(|&k| self.chunk[k].slice(self.pos, 1))
                .collect(),
        );
        self.previous_open = self.is_open();
        self.pos += 1;
        if self.pos == self.chunk.first().map_or(0, Column::len) && !self.done() {
            self.load(self.row())?;
        }
        if !self.done() {
            self.check_order()?;
        }
        Ok(())
    }
}

struct OutField {
    old: Option<usize>,
    new: Option<usize>,
    builder: ColumnBuilder,
    writer: Option<FieldWriter>,
}

struct Output {
    fields: Vec<OutField>,
    from: Vec<f64>,
    to: Vec<f64>,
    from_writer: Option<FieldWriter>,
    to_writer: Option<FieldWriter>,
    rows: u64,
}

#[derive(Clone, Copy)]
enum Source {
    Old,
    New,
}

impl Output {
    fn emit(&mut self, side: &Side, which: Source, from: f64, to: f64) -> Result<()> {
        for f in &mut self.fields {
            let idx = match which {
                Source::Old => f.old,
                Source::New => f.new,
            };
            match idx {
                Some(i) => f.builder.push_from(&side.chunk[i], side.pos),
                None => f.builder.push_fill(),
            }
        }
        self.from.push(from);
        self.to.push(to);
        self.rows += 1;
        if self.from.len() as u64 == JOURNAL_CHUNK_ROWS {
            self.flush()?;
        }
        Ok(())
    }

    /// Copies a journaled old row with its existing stamps.
    fn pass_through(&mut self, side: &Side) -> Result<()> {
        let (f, t) = side.stamps.expect("only journaled rows pass through");
        let stamp = |i: usize| match side.chunk[i].get(side.pos).value {
            crate::Value::Float(v) => v,
            _ => unreachable!("stamp kind checked"),
        };
        self.emit(side, Source::Old, stamp(f), stamp(t))
    }

    fn flush(&mut self) -> Result<()> {
        for f in &mut self.fields {
            f.writer
                .as_mut()
                .expect("open writer")
                .write(&f.builder.drain())?;
        }
        let stamps = [
            (&mut self.from_writer, &mut self.from),
            (&mut self.to_writer, &mut self.to),
        ];
        for (w, v) in stamps {
            w.as_mut()
                .expect("open writer")
                .write(&Column::numeric(std::mem::take(v)))?;
        }
        Ok(())
    }

    fn writers(&mut self) -> impl Iterator<Item = FieldWriter> + '_ {
        self.fields
            .iter_mut()
            .filter_map(|f| f.writer.take())
            .chain(self.from_writer.take())
            .chain(self.to_writer.take())
    }
}

/// Journals `new_table` of `new_ds` against `old_table` of `old_ds` into a
/// new table `out_table` of `out`.
///
/// Both inputs must be sorted by the key fields with unique keys. An old
/// table that already carries stamp fields is treated as an earlier journal:
/// its closed versions are copied through and only its open versions are
/// compared.
pub fn journal_table(
    old_ds: &Dataset,
    old_table: &str,
    new_ds: &Dataset,
    new_table: &str,
    out: &mut Dataset,
    out_table: &str,
    options: &JournalOptions,
) -> Result<JournalResult> {
    let started = Instant::now();
    if options.t_old.partial_cmp(&options.t_new) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Parameter(format!(
            "t_old ({}) must be earlier than t_new ({})",
            options.t_old, options.t_new
        )));
    }
    if options.key_fields.is_empty() {
        return Err(Error::Parameter(
            "at least one key field is required".into(),
        ));
    }
    let old = Side::new(old_ds.fields(old_table)?, &options.key_fields, "old")?;
    let new = Side::new(new_ds.fields(new_table)?, &options.key_fields, "new")?;
    if new.stamps.is_some() {
        return Err(Error::Schema(
            "new snapshot already carries journal stamps".into(),
        ));
    }
    for (&a, &b) in old.keys.iter().zip(&new.keys) {
        old.chunk[a].check_comparable(&new.chunk[b])?;
    }

    let is_stamp = |n: &str| n == VALID_FROM || n == VALID_TO;
    let mut layout: Vec<(String, FieldKind, Option<usize>, Option<usize>)> = Vec::new();
    for (i, f) in old.fields.iter().enumerate() {
        if is_stamp(f.name()) {
            continue;
        }
        match new.fields.iter().position(|g| g.name() == f.name()) {
            Some(j) => layout.push((
                f.name().to_owned(),
                merged_kind(f.kind(), new.fields[j].kind())?,
                Some(i),
                Some(j),
            )),
            None => layout.push((f.name().to_owned(), f.kind().with_validity(), Some(i), None)),
        }
    }
    for (j, f) in new.fields.iter().enumerate() {
        if !old.fields.iter().any(|g| g.name() == f.name()) {
            layout.push((f.name().to_owned(), f.kind().with_validity(), None, Some(j)));
        }
    }
    let compared: Vec<(usize, usize)> = layout
        .iter()
        .filter(|(name, ..)| !options.key_fields.contains(name))
        .filter_map(|(_, _, o, n)| Some(((*o)?, (*n)?)))
        .collect();
    if compared.is_empty() {
        return Err(Error::Schema(
            "snapshots share no fields besides the key".into(),
        ));
    }

    out.create_table(out_table)?;
    let mut output = Output {
        fields: Vec::with_capacity(layout.len()),
        from: Vec::new(),
        to: Vec::new(),
        from_writer: None,
        to_writer: None,
        rows: 0,
    };
    let stamp_kind = FieldKind::numeric(ValueType::Float64);
    let opened = (|| -> Result<()> {
        for (name, kind, o, n) in &layout {
            output.fields.push(OutField {
                old: *o,
                new: *n,
                builder: ColumnBuilder::new(&Column::empty_for(kind), false),
                writer: Some(out.field_writer(out_table, name, kind.clone())?),
            });
        }
        output.from_writer = Some(out.field_writer(out_table, VALID_FROM, stamp_kind.clone())?);
        output.to_writer = Some(out.field_writer(out_table, VALID_TO, stamp_kind.clone())?);
        Ok(())
    })();
    let mut result = JournalResult {
        old_row_count: old.rows,
        new_row_count: new.rows,
        ..Default::default()
    };
    let merged = opened.and_then(|_| merge(old, new, &compared, &mut output, options, &mut result));
    if let Err(e) = merged {
        output.writers().for_each(FieldWriter::abandon);
        return Err(e);
    }
    let writers: Vec<_> = output.writers().collect();
    for w in writers {
        w.finish(out)?;
    }
    result.journaled_row_count = output.rows;
    out.append_provenance(
        ProvenanceRecord::new("journal", JOURNAL_VERSION)
            .param("old_table", old_table)
            .param("new_table", new_table)
            .param("out_table", out_table)
            .param("keys", options.key_fields.join(","))
            .param("t_old", options.t_old)
            .param("t_new", options.t_new)
            .param("close_only_old", options.close_only_old)
            .param("seconds", started.elapsed().as_secs_f64()),
    )?;
    Ok(result)
}

fn merge(
    mut old: Side,
    mut new: Side,
    compared: &[(usize, usize)],
    out: &mut Output,
    options: &JournalOptions,
    result: &mut JournalResult,
) -> Result<()> {
    let (t_old, t_new) = (options.t_old, options.t_new);
    let old_from = |side: &Side| match side.stamps {
        Some((f, _)) => match side.chunk[f].get(side.pos).value {
            crate::Value::Float(v) => v,
            _ => unreachable!("stamp kind checked"),
        },
        None => t_old,
    };
    let only_old_to = if options.close_only_old { t_new } else { OPEN };
    loop {
        let ord = match (old.done(), new.done()) {
            (true, true) => break,
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            (false, false) => old.cmp_keys(&new),
        };
        match ord {
            Ordering::Less | Ordering::Equal if !old.is_open() => {
                out.pass_through(&old)?;
                old.advance()?;
            }
            Ordering::Less => {
                result.rows_only_old += 1;
                out.emit(&old, Source::Old, old_from(&old), only_old_to)?;
                old.advance()?;
            }
            Ordering::Greater => {
                result.rows_only_new += 1;
                out.emit(&new, Source::New, t_new, OPEN)?;
                new.advance()?;
            }
            Ordering::Equal => {
                let same = compared
                    .iter()
                    .all(|&(o, n)| old.chunk[o].rows_equal(old.pos, &new.chunk[n], new.pos));
                if same {
                    result.rows_not_updated += 1;
                    out.emit(&old, Source::Old, old_from(&old), OPEN)?;
                } else {
                    result.rows_updated += 1;
                    out.emit(&old, Source::Old, old_from(&old), t_new)?;
                    out.emit(&new, Source::New, t_new, OPEN)?;
                }
                old.advance()?;
                new.advance()?;
            }
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot(ds: &mut Dataset, table: &str, keys: &[i64], values: &[&str]) {
        ds.create_table(table).unwrap();
        ds.write_field(
            table,
            "id",
            FieldKind::numeric(ValueType::Int64),
            &Column::numeric(keys.to_vec()),
        )
        .unwrap();
        ds.write_field(
            table,
            "v",
            FieldKind::IndexedString,
            &Column::indexed(values.iter().copied()),
        )
        .unwrap();
    }

    #[test]
    fn three_key_example() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::create(dir.path().join("ds")).unwrap();
        snapshot(&mut ds, "old", &[1, 2, 3], &["a", "x", "c"]);
        snapshot(&mut ds, "new", &[2, 3, 4], &["y", "c", "d"]);
        let mut out = Dataset::create(dir.path().join("out")).unwrap();
        let r = journal_table(
            &ds,
            "old",
            &ds,
            "new",
            &mut out,
            "t",
            &JournalOptions::new(&["id"], 10.0, 20.0),
        )
        .unwrap();
        assert_eq!(
            (
                r.rows_only_old,
                r.rows_only_new,
                r.rows_updated,
                r.rows_not_updated
            ),
            (1, 1, 1, 1)
        );
        assert_eq!(r.journaled_row_count, 5);
        assert_eq!(
            out.field("t", "id").unwrap().read_all().unwrap(),
            Column::numeric(vec![1i64, 2, 2, 3, 4])
        );
        assert_eq!(
            out.field("t", "v").unwrap().read_all().unwrap(),
            Column::indexed(["a", "x", "y", "c", "d"])
        );
        assert_eq!(
            out.field("t", VALID_TO).unwrap().read_all().unwrap(),
            Column::numeric(vec![OPEN, 20.0, OPEN, OPEN, OPEN])
        );
        assert_eq!(out.provenance().last().unwrap().operation_name, "journal");
    }

    #[test]
    fn rejects_bad_parameters_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::create(dir.path().join("ds")).unwrap();
        snapshot(&mut ds, "old", &[1, 2], &["a", "b"]);
        snapshot(&mut ds, "dup", &[1, 1], &["a", "b"]);
        snapshot(&mut ds, "unsorted", &[2, 1], &["a", "b"]);
        let mut out = Dataset::create(dir.path().join("out")).unwrap();
        let opts = JournalOptions::new(&["id"], 10.0, 20.0);
        let bad_time = JournalOptions::new(&["id"], 20.0, 20.0);
        assert!(matches!(
            journal_table(&ds, "old", &ds, "old", &mut out, "a", &bad_time),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            journal_table(&ds, "old", &ds, "dup", &mut out, "b", &opts),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            journal_table(&ds, "unsorted", &ds, "old", &mut out, "c", &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn no_common_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::create(dir.path().join("ds")).unwrap();
        snapshot(&mut ds, "old", &[1], &["a"]);
        ds.create_table("bare").unwrap();
        ds.write_field(
            "bare",
            "id",
            FieldKind::numeric(ValueType::Int64),
            &Column::numeric(vec![1i64]),
        )
        .unwrap();
        let mut out = Dataset::create(dir.path().join("out")).unwrap();
        assert!(matches!(
            journal_table(
                &ds,
                "old",
                &ds,
                "bare",
                &mut out,
                "t",
                &JournalOptions::new(&["id"], 1.0, 2.0)
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn field_equality_rules() {
        let int = FieldKind::numeric(ValueType::Int32);
        let opt = int.with_validity();
        let a = Column::numeric_with_validity(vec![7i32, 0], vec![true, false]);
        let b = Column::numeric_with_validity(vec![7i32, 3], vec![true, false]);
        assert!(field_rows_equal(&opt, &a, 0, &opt, &b, 0).unwrap());
        assert!(field_rows_equal(&opt, &a, 1, &opt, &b, 1).unwrap());
        let nan = Column::numeric(vec![f64::NAN]);
        let f = FieldKind::numeric(ValueType::Float64);
        assert!(field_rows_equal(&f, &nan, 0, &f, &nan, 0).unwrap());
        assert!(matches!(
            field_rows_equal(&int, &a, 0, &f, &nan, 0),
            Err(Error::Type(_))
        ));
        assert!(field_rows_equal(&int, &Column::numeric(vec![7i32]), 0, &opt, &a, 0).unwrap());
    }
}
