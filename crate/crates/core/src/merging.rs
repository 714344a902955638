//! Joins on sorted keys, computed as index maps and applied field by field.

use std::cmp::Ordering;

use crate::column::{Column, ColumnBuilder};
use crate::error::{Error, Result};
use crate::store::{ChunkCursor, ColumnSink, ColumnSource, Dataset, Field};

/// Map entry for a row with no partner.
pub const INVALID_ROW: u64 = u64::MAX;
pub const MERGE_CHUNK_ROWS: u64 = 1 << 16;

/// For every left row, the matching right row or [`INVALID_ROW`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinMap {
    pub left_to_right: Vec<u64>,
    pub right_rows: u64,
    /// Key comparisons between the two sides; at most `m + n`.
    pub comparisons: u64,
}

impl JoinMap {
    pub fn matched(&self) -> usize {
        self.left_to_right
            .iter()
            .filter(|&&j| j != INVALID_ROW)
            .count()
    }

    /// For every right row, the first left row holding its key.
    pub fn right_to_left(&self) -> Vec<u64> {
        let mut out = vec![INVALID_ROW; self.right_rows as usize];
        for (i, &j) in self.left_to_right.iter().enumerate() {
            if j != INVALID_ROW && out[j as usize] == INVALID_ROW {
                out[j as usize] = i as u64;
            }
        }
        out
    }

    /// Row pairs of the inner join, in left order.
    pub fn inner_pairs(&self) -> (Vec<u64>, Vec<u64>) {
        self.left_to_right
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != INVALID_ROW)
            .map(|(i, &j)| (i as u64, j))
            .unzip()
    }
}

/// Walks a key source row by row, checking order as it goes.
struct KeyStream<'a> {
    cursor: ChunkCursor<'a>,
    chunk: Column,
    pos: usize,
    row: u64,
    name: String,
}

impl<'a> KeyStream<'a> {
    fn new(source: &'a dyn ColumnSource) -> Result<Self> {
        let mut cursor = ChunkCursor::new(source, MERGE_CHUNK_ROWS);
        let chunk = match cursor.next() {
            Some(c) => c?,
            None => source.read_rows(0, 0)?,
        };
        Ok(KeyStream {
            cursor,
            chunk,
            pos: 0,
            row: 0,
            name: source.describe(),
        })
    }

    fn done(&self) -> bool {
        self.pos >= self.chunk.len()
    }

    /// Moves to the next row; returns how it orders against the row left.
    fn advance(&mut self) -> Result<Option<Ordering>> {
        self.row += 1;
        if self.pos + 1 < self.chunk.len() {
            self.pos += 1;
            return Ok(Some(self.chunk.cmp_rows(
                self.pos,
                &self.chunk,
                self.pos - 1,
            )));
        }
        match self.cursor.next() {
            Some(next) => {
                let next = next?;
                let ord = next.cmp_rows(0, &self.chunk, self.pos);
                self.chunk = next;
                self.pos = 0;
                Ok(Some(ord))
            }
            None => {
                self.pos = self.chunk.len();
                Ok(None)
            }
        }
    }

    fn unsorted(&self) -> Error {
        Error::Precondition(format!(
            "{} is not sorted (row {} is smaller than the row before it)",
            self.name, self.row
        ))
    }
}

/// Maps each row of the sorted `left_fk` to the row of the sorted, unique
/// `right_pk` holding the same key, in one pass over both.
pub fn ordered_map_left(
    left_fk: &dyn ColumnSource,
    right_pk: &dyn ColumnSource,
) -> Result<JoinMap> {
    left_fk
        .read_rows(0, 0)?
        .check_comparable(&right_pk.read_rows(0, 0)?)?;
    let mut left = KeyStream::new(left_fk)?;
    let mut right = KeyStream::new(right_pk)?;
    let mut map = Vec::with_capacity(left_fk.row_count() as usize);
    let mut comparisons = 0u64;

    let step_right = |right: &mut KeyStream| -> Result<()> {
        match right.advance()? {
            Some(Ordering::Less) => Err(right.unsorted()),
            Some(Ordering::Equal) => Err(Error::Key(format!(
                "{} repeats the key at row {}; primary keys must be unique",
                right.name, right.row
            ))),
            _ => Ok(()),
        }
    };

    while !left.done() {
        let mut target = INVALID_ROW;
        while !right.done() {
            comparisons += 1;
            match right.chunk.cmp_rows(right.pos, &left.chunk, left.pos) {
                Ordering::Less => step_right(&mut right)?,
                Ordering::Equal => {
                    target = right.row;
                    break;
                }
                Ordering::Greater => break,
            }
        }
        map.push(target);
        if left.advance()? == Some(Ordering::Less) {
            return Err(left.unsorted());
        }
    }
    while !right.done() {
        step_right(&mut right)?;
    }
    Ok(JoinMap {
        left_to_right: map,
        right_rows: right_pk.row_count(),
        comparisons,
    })
}

/// Reads `source` rows named by `map` (fill rows for [`INVALID_ROW`]) into
/// `sink` in chunks. Runs of increasing indices read each source row at most
/// once.
pub fn gather(
    map: &[u64],
    source: &dyn ColumnSource,
    fillable: bool,
    sink: &mut dyn ColumnSink,
) -> Result<()> {
    let n = source.row_count();
    let mut window = source.read_rows(0, 0)?;
    let mut window_start = 0u64;
    let mut builder = ColumnBuilder::new(&window, fillable);
    for &j in map {
        if j == INVALID_ROW {
            if !fillable {
                return Err(Error::Parameter(
                    "unmatched row in a map without fill".into(),
                ));
            }
            builder.push_fill();
        } else {
            if j >= n {
                return Err(Error::Bounds {
                    start: j,
                    count: 1,
                    len: n,
                });
            }
            if j < window_start || j >= window_start + window.len() as u64 {
                window_start = j;
                window = source.read_rows(j, MERGE_CHUNK_ROWS.min(n - j))?;
            }
            builder.push_from(&window, (j - window_start) as usize);
        }
        if builder.len() as u64 == MERGE_CHUNK_ROWS {
            sink.push(&builder.drain())?;
        }
    }
    sink.push(&builder.drain())
}

fn check_lengths(fields: &[&dyn ColumnSource], rows: u64, side: &str) -> Result<()> {
    match fields.iter().find(|f| f.row_count() != rows) {
        Some(f) => Err(Error::Shape(format!(
            "{side} field {} has {} rows, its key has {rows}",
            f.describe(),
            f.row_count()
        ))),
        None => Ok(()),
    }
}

fn gather_all(map: &[u64], fields: &[&dyn ColumnSource], fillable: bool) -> Result<Vec<Column>> {
    fields
        .iter()
        .map(|f| {
            let mut out = None;
            gather(map, *f, fillable, &mut out)?;
            Ok(out.expect("gather pushes at least once"))
        })
        .collect()
}

/// Right fields mapped onto left rows; unmatched rows get the fill value.
pub fn ordered_merge_left(
    left_fk: &dyn ColumnSource,
    right_pk: &dyn ColumnSource,
    right_fields: &[&dyn ColumnSource],
) -> Result<Vec<Column>> {
    check_lengths(right_fields, right_pk.row_count(), "right")?;
    let map = ordered_map_left(left_fk, right_pk)?;
    gather_all(&map.left_to_right, right_fields, true)
}

/// Left fields mapped onto right rows, taking the first matching left row.
pub fn ordered_merge_right(
    left_fk: &dyn ColumnSource,
    right_pk: &dyn ColumnSource,
    left_fields: &[&dyn ColumnSource],
) -> Result<Vec<Column>> {
    check_lengths(left_fields, left_fk.row_count(), "left")?;
    let map = ordered_map_left(left_fk, right_pk)?;
    gather_all(&map.right_to_left(), left_fields, true)
}

/// Left rows whose key matches, in left order, with the left fields followed
/// by the right fields.
pub fn ordered_merge_inner(
    left_fk: &dyn ColumnSource,
    right_pk: &dyn ColumnSource,
    left_fields: &[&dyn ColumnSource],
    right_fields: &[&dyn ColumnSource],
) -> Result<(u64, Vec<Column>)> {
    check_lengths(left_fields, left_fk.row_count(), "left")?;
    check_lengths(right_fields, right_pk.row_count(), "right")?;
    let map = ordered_map_left(left_fk, right_pk)?;
    let (lrows, rrows) = map.inner_pairs();
    let mut out = gather_all(&lrows, left_fields, false)?;
    out.extend(gather_all(&rrows, right_fields, false)?);
    Ok((lrows.len() as u64, out))
}

/// Writes `fields` gathered through `map` into table `destination`, named
/// `prefix` + field name. With `fillable`, numeric and datetime outputs
/// gain a validity companion.
pub fn write_mapped(
    ds: &mut Dataset,
    map: &[u64],
    fields: &[Field],
    fillable: bool,
    destination: &str,
    prefix: &str,
) -> Result<Vec<Field>> {
    if !ds.has_table(destination) {
        ds.create_table(destination)?;
    }
    let mut out = Vec::with_capacity(fields.len());
    for field in fields {
        let kind = if fillable {
            field.kind().with_validity()
        } else {
            field.kind().clone()
        };
        let name = format!("{prefix}{}", field.name());
        let mut writer = ds.field_writer(destination, &name, kind)?;
        if let Err(e) = gather(map, field, fillable, &mut writer) {
            writer.abandon();
            return Err(e);
        }
        out.push(writer.finish(ds)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Column {
        Column::numeric(v.to_vec())
    }

    #[test]
    fn table_four_map() {
        let left = ints(&[0, 1, 1, 2, 4, 5, 5, 6, 8, 9]);
        let right = ints(&(0..10).collect::<Vec<_>>());
        let map = ordered_map_left(&left, &right).unwrap();
        assert_eq!(map.left_to_right, vec![0, 1, 1, 2, 4, 5, 5, 6, 8, 9]);
        assert!(map.comparisons <= 20);
    }

    #[test]
    fn no_matches_give_sentinels() {
        let map = ordered_map_left(&ints(&[3, 7]), &ints(&[0, 1, 2])).unwrap();
        assert_eq!(map.left_to_right, vec![INVALID_ROW, INVALID_ROW]);
    }

    #[test]
    fn unsorted_and_duplicate_keys() {
        assert!(matches!(
            ordered_map_left(&ints(&[2, 1]), &ints(&[0, 1, 2])),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            ordered_map_left(&ints(&[0]), &ints(&[0, 2, 1])),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            ordered_map_left(&ints(&[0]), &ints(&[0, 1, 1])),
            Err(Error::Key(_))
        ));
    }

    #[test]
    fn right_join_takes_first_match() {
        let out = ordered_merge_right(
            &ints(&[0, 0, 2]),
            &ints(&[0, 1, 2]),
            &[&Column::numeric(vec![10i32, 11, 12])],
        )
        .unwrap();
        assert_eq!(
            out[0],
            Column::numeric_with_validity(vec![10i32, 0, 12], vec![true, false, true])
        );
    }

    #[test]
    fn empty_left_and_no_fields() {
        let out = ordered_merge_left(&ints(&[]), &ints(&[1, 2]), &[&ints(&[5, 6])]).unwrap();
        assert!(out[0].is_empty());
        assert!(ordered_merge_left(&ints(&[1]), &ints(&[1]), &[])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn inner_on_disjoint_keys() {
        let (rows, out) = ordered_merge_inner(
            &ints(&[1, 3]),
            &ints(&[2, 4]),
            &[&ints(&[7, 8])],
            &[&ints(&[5, 6])],
        )
        .unwrap();
        assert_eq!(rows, 0);
        assert!(out.iter().all(Column::is_empty));
    }

    #[test]
    fn string_keys_join() {
        let map = ordered_map_left(
            &Column::indexed(["a", "b", "b", "d"]),
            &Column::fixed(["b", "c", "d"]),
        )
        .unwrap();
        assert_eq!(map.left_to_right, vec![INVALID_ROW, 0, 0, 2]);
    }

    #[test]
    fn mismatched_key_types() {
        assert!(matches!(
            ordered_map_left(&ints(&[1]), &Column::numeric(vec![1i32])),
            Err(Error::Type(_))
        ));
    }
}
