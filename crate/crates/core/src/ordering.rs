//! Permutation indices: stable argsort, multi-key argsort, external sort and
//! streaming permutation of fields.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::column::{Column, NumericValues};
use crate::error::{Error, Result};
use crate::kind::NativeType;
use crate::store::{ChunkCursor, ColumnSink, ColumnSource, Dataset, Field};

/// Environment variable naming the directory external sorts write runs to.
pub const SCRATCH_ENV: &str = "COLCUR_SCRATCH";
pub const PERMUTE_CHUNK_ROWS: usize = 1 << 16;

/// A bijection on `[0, domain_size)`: row `i` of the sorted view is row
/// `order[i]` of the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationIndex {
    order: Vec<u64>,
}

impl PermutationIndex {
    /// Checks that `order` holds every index below its length exactly once.
    pub fn new(order: Vec<u64>) -> Result<Self> {
        if !is_permutation(&order) {
            return Err(Error::Parameter(
                "index is not a permutation of its row range".into(),
            ));
        }
        Ok(PermutationIndex { order })
    }

    pub fn identity(n: u64) -> Self {
        PermutationIndex {
            order: (0..n).collect(),
        }
    }

    pub fn order(&self) -> &[u64] {
        &self.order
    }

    pub fn into_order(self) -> Vec<u64> {
        self.order
    }

    pub fn domain_size(&self) -> u64 {
        self.order.len() as u64
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `out[i] = q[p[i]]`, so applying the result equals applying `q` and
    /// then `p`.
    pub fn compose(q: &Self, p: &Self) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Shape(format!(
                "cannot compose permutations of {} and {} rows",
                q.len(),
                p.len()
            )));
        }
        Ok(PermutationIndex {
            order: p.order.iter().map(|&i| q.order[i as usize]).collect(),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| i as u64 == o)
    }
}

/// True when `order` marks every index in `[0, len)` exactly once.
pub fn is_permutation(order: &[u64]) -> bool {
    let mut seen = vec![false; order.len()];
    for &i in order {
        match seen.get_mut(i as usize) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

fn argsort_native<T: NativeType>(values: &[T]) -> Vec<u64> {
    let mut order: Vec<u64> = (0..values.len() as u64).collect();
    order.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]));
    order
}

/// Stable argsort by stored value. Strings order bytewise, floats place NaN
/// last, and validity is not consulted.
pub fn argsort_stable(values: &Column) -> PermutationIndex {
    let order = match values {
        Column::Numeric { values, .. } | Column::Categorical(values) => {
            crate::numeric_dispatch!(values, v => argsort_native(v))
        }
        Column::DateTime { values, .. } => argsort_native(values),
        Column::FixedString(v) | Column::IndexedString(v) => {
            let mut order: Vec<u64> = (0..v.len() as u64).collect();
            order.sort_by(|&a, &b| v[a as usize].as_bytes().cmp(v[b as usize].as_bytes()));
            order
        }
    };
    PermutationIndex { order }
}

/// Argsort over several keys, most significant first.
///
/// Keys are applied least significant first: each step gathers the key
/// through the accumulated index, argsorts it stably and composes the
/// result into the index.
pub fn multi_key_argsort(keys: &[&dyn ColumnSource]) -> Result<PermutationIndex> {
    let n = match keys.first() {
        Some(k) => k.row_count(),
        None => return Err(Error::Parameter("at least one sort key is required".into())),
    };
    if let Some(k) = keys.iter().find(|k| k.row_count() != n) {
        return Err(Error::Shape(format!(
            "key {} has {} rows, expected {n}",
            k.describe(),
            k.row_count()
        )));
    }
    let mut acc = PermutationIndex::identity(n);
    for key in keys.iter().rev() {
        let data = key.read_rows(0, n)?;
        let gathered = if acc.is_identity() {
            data
        } else {
            data.take(acc.order())
        };
        let step = argsort_stable(&gathered);
        acc = PermutationIndex::compose(&acc, &step)?;
    }
    Ok(acc)
}

/// Streaming check that a source is non-decreasing.
pub fn is_sorted(values: &dyn ColumnSource) -> Result<bool> {
    let mut previous: Option<Column> = None;
    for chunk in ChunkCursor::new(values, PERMUTE_CHUNK_ROWS as u64) {
        let chunk = chunk?;
        if let Some(p) = &previous {
            if p.cmp_rows(0, &chunk, 0) == Ordering::Greater {
                return Ok(false);
            }
        }
        for i in 1..chunk.len() {
            if chunk.cmp_rows(i - 1, &chunk, i) == Ordering::Greater {
                return Ok(false);
            }
        }
        previous = Some(chunk.slice(chunk.len() - 1, 1));
    }
    Ok(true)
}

/// Directory external sorts create their run files under.
pub fn scratch_dir() -> PathBuf {
    std::env::var_os(SCRATCH_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

/// A scratch directory removed on drop.
struct ScratchDir(PathBuf);

impl ScratchDir {
    fn create(parent: &Path) -> Result<Self> {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let n = NEXT.fetch_add(1, AtomicOrdering::Relaxed);
        let path = parent.join(format!("colcur-sort-{}-{n}", std::process::id()));
        fs::create_dir_all(&path)?;
        Ok(ScratchDir(path))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExternalSortStats {
    pub rows: u64,
    pub runs: usize,
    /// Values held by run cursors during the merge, summed over runs.
    pub merge_buffer_elements: usize,
    pub scratch_bytes: u64,
}

/// Sorts a numeric, categorical or datetime source with at most `budget`
/// values in memory at once, returning the full permutation.
pub fn external_sort(values: &dyn ColumnSource, budget: usize) -> Result<PermutationIndex> {
    let mut order = Vec::with_capacity(values.row_count() as usize);
    external_sort_into(values, budget, &scratch_dir(), &mut |chunk: &[u64]| {
        order.extend_from_slice(chunk);
        Ok(())
    })?;
    Ok(PermutationIndex { order })
}

/// Like [`external_sort`], handing the permutation to `sink` in pieces so it
/// never needs to be held whole.
pub fn external_sort_into(
    values: &dyn ColumnSource,
    budget: usize,
    scratch: &Path,
    sink: &mut dyn FnMut(&[u64]) -> Result<()>,
) -> Result<ExternalSortStats> {
    if budget < 2 {
        return Err(Error::Parameter(format!(
            "memory budget must be at least 2 elements, got {budget}"
        )));
    }
    let template = values.read_rows(0, 0)?;
    match &template {
        Column::Numeric { values: v, .. } | Column::Categorical(v) => {
            crate::numeric_dispatch!(v, t => sort_typed(values, budget, scratch, sink, first_of(t)))
        }
        Column::DateTime { .. } => sort_typed::<f64>(values, budget, scratch, sink, None),
        other => Err(Error::Type(format!(
            "external sort needs fixed-width numeric values, got {}",
            other.variant_name()
        ))),
    }
}

// Carries the element type into `sort_typed` from a dispatched vector.
fn first_of<T: NativeType>(_: &[T]) -> Option<T> {
    None
}

fn typed_chunk<T: NativeType>(column: Column) -> Result<Vec<T>> {
    let values = match column {
        Column::Numeric { values, .. } | Column::Categorical(values) => values,
        Column::DateTime { values, .. } => NumericValues::Float64(values),
        other => {
            return Err(Error::Type(format!(
                "{} is not numeric",
                other.variant_name()
            )))
        }
    };
    T::unwrap(values).map_err(|v| {
        Error::Type(format!(
            "source changed value type to {} mid-stream",
            v.value_type()
        ))
    })
}

/// One sorted run inside the shared run files.
struct RunCursor<T> {
    next: u64,
    end: u64,
    values: Vec<T>,
    indices: Vec<u64>,
    pos: usize,
}

impl<T: NativeType> RunCursor<T> {
    fn refill(&mut self, vfile: &File, ifile: &File, buffer: usize) -> Result<()> {
        let count = (buffer as u64).min(self.end - self.next) as usize;
        let mut bytes = vec![0u8; count * T::WIDTH];
        vfile.read_exact_at(&mut bytes, self.next * T::WIDTH as u64)?;
        self.values = T::decode(&bytes);
        bytes.resize(count * 8, 0);
        ifile.read_exact_at(&mut bytes, self.next * 8)?;
        self.indices = bytes
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        self.next += count as u64;
        self.pos = 0;
        Ok(())
    }
}

struct HeapEntry<T> {
    value: T,
    index: u64,
    run: usize,
}

impl<T: NativeType> Ord for HeapEntry<T> {
    // reversed so the std max-heap pops the smallest (value, index)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then(other.index.cmp(&self.index))
    }
}

impl<T: NativeType> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: NativeType> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: NativeType> Eq for HeapEntry<T> {}

const SINK_BATCH: usize = 1 << 16;

fn sort_typed<T: NativeType>(
    source: &dyn ColumnSource,
    budget: usize,
    scratch: &Path,
    sink: &mut dyn FnMut(&[u64]) -> Result<()>,
    _: Option<T>,
) -> Result<ExternalSortStats> {
    let n = source.row_count();
    let mut stats = ExternalSortStats {
        rows: n,
        ..Default::default()
    };
    if n <= budget as u64 {
        let values: Vec<T> = typed_chunk(source.read_rows(0, n)?)?;
        let order = argsort_native(&values);
        for piece in order.chunks(SINK_BATCH) {
            sink(piece)?;
        }
        stats.runs = 1;
        return Ok(stats);
    }

    // Phase one: sorted runs of `budget` values, stored back to back.
    let dir = ScratchDir::create(scratch)?;
    let (vpath, ipath) = (dir.0.join("runs.dat"), dir.0.join("runs.idx"));
    let mut vout = BufWriter::new(File::create(&vpath)?);
    let mut iout = BufWriter::new(File::create(&ipath)?);
    let mut bounds = Vec::new();
    let mut bytes = Vec::new();
    let mut start = 0u64;
    while start < n {
        let count = (budget as u64).min(n - start);
        let values: Vec<T> = typed_chunk(source.read_rows(start, count)?)?;
        let order = argsort_native(&values);
        bytes.clear();
        for &i in &order {
            values[i as usize].put_le(&mut bytes);
        }
        vout.write_all(&bytes)?;
        bytes.clear();
        for &i in &order {
            bytes.extend_from_slice(&(start + i).to_le_bytes());
        }
        iout.write_all(&bytes)?;
        bounds.push((start, start + count));
        start += count;
    }
    vout.flush()?;
    iout.flush()?;
    drop((vout, iout));
    stats.runs = bounds.len();
    stats.scratch_bytes = n * (T::WIDTH as u64 + 8);

    // Phase two: k-way heap merge, ties broken by original index.
    let vfile = OpenOptions::new().read(true).open(&vpath)?;
    let ifile = OpenOptions::new().read(true).open(&ipath)?;
    let buffer = (budget / bounds.len()).max(1);
    stats.merge_buffer_elements = buffer * bounds.len();
    let mut cursors: Vec<RunCursor<T>> = Vec::with_capacity(bounds.len());
    let mut heap = BinaryHeap::with_capacity(bounds.len());
    for (run, &(lo, hi)) in bounds.iter().enumerate() {
        let mut c = RunCursor {
            next: lo,
            end: hi,
            values: Vec::new(),
            indices: Vec::new(),
            pos: 0,
        };
        c.refill(&vfile, &ifile, buffer)?;
        heap.push(HeapEntry {
            value: c.values[0],
            index: c.indices[0],
            run,
        });
        cursors.push(c);
    }
    let mut out = Vec::with_capacity(SINK_BATCH);
    while let Some(top) = heap.pop() {
        out.push(top.index);
        if out.len() == SINK_BATCH {
            sink(&out)?;
            out.clear();
        }
        let c = &mut cursors[top.run];
        c.pos += 1;
        if c.pos == c.values.len() {
            if c.next == c.end {
                c.values = Vec::new();
                c.indices = Vec::new();
                continue;
            }
            c.refill(&vfile, &ifile, buffer)?;
        }
        heap.push(HeapEntry {
            value: c.values[c.pos],
            index: c.indices[c.pos],
            run: top.run,
        });
    }
    if !out.is_empty() {
        sink(&out)?;
    }
    Ok(stats)
}

/// Writes `source` reordered by `perm` into `sink`, in chunks.
pub fn permute_into(
    perm: &PermutationIndex,
    source: &dyn ColumnSource,
    sink: &mut dyn ColumnSink,
) -> Result<()> {
    if source.row_count() != perm.domain_size() {
        return Err(Error::Shape(format!(
            "{} has {} rows, permutation covers {}",
            source.describe(),
            source.row_count(),
            perm.domain_size()
        )));
    }
    let data = source.read_rows(0, source.row_count())?;
    if perm.is_empty() {
        return sink.push(&data);
    }
    for piece in perm.order().chunks(PERMUTE_CHUNK_ROWS) {
        sink.push(&data.take(piece))?;
    }
    Ok(())
}

/// Writes each field reordered by `perm` into table `destination` under the
/// same name, creating the table if needed. Fields are loaded one at a time.
pub fn apply_permutation(
    ds: &mut Dataset,
    perm: &PermutationIndex,
    fields: &[Field],
    destination: &str,
) -> Result<Vec<Field>> {
    if let Some(f) = fields.iter().find(|f| f.row_count() != perm.domain_size()) {
        return Err(Error::Shape(format!(
            "field {}.{} has {} rows, permutation covers {}",
            f.table(),
            f.name(),
            f.row_count(),
            perm.domain_size()
        )));
    }
    if !ds.has_table(destination) {
        ds.create_table(destination)?;
    }
    let mut out = Vec::with_capacity(fields.len());
    for field in fields {
        let mut writer = ds.field_writer(destination, field.name(), field.kind().clone())?;
        if let Err(e) = permute_into(perm, field, &mut writer) {
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

    #[test]
    fn argsort_examples() {
        assert_eq!(
            argsort_stable(&Column::numeric(vec![3i64, 1, 2])).order(),
            &[1, 2, 0]
        );
        assert!(argsort_stable(&Column::numeric(Vec::<i64>::new())).is_empty());
        assert_eq!(
            argsort_stable(&Column::numeric(vec![5u8, 5, 5])).order(),
            &[0, 1, 2]
        );
    }

    #[test]
    fn nan_sorts_last_and_stably() {
        let c = Column::numeric(vec![f64::NAN, 1.0, f64::NAN, -1.0]);
        assert_eq!(argsort_stable(&c).order(), &[3, 1, 0, 2]);
    }

    #[test]
    fn two_key_example() {
        let a = Column::numeric(vec![2i32, 1, 2, 1]);
        let b = Column::indexed(["b", "a", "a", "b"]);
        let perm = multi_key_argsort(&[&a, &b]).unwrap();
        assert_eq!(perm.order(), &[1, 3, 2, 0]);
    }

    #[test]
    fn multi_key_shape_mismatch() {
        let a = Column::numeric(vec![1i32, 2]);
        let b = Column::numeric(vec![1i32]);
        assert!(matches!(multi_key_argsort(&[&a, &b]), Err(Error::Shape(_))));
    }

    #[test]
    fn compose_and_validate() {
        let q = PermutationIndex::new(vec![2, 0, 1]).unwrap();
        let p = PermutationIndex::new(vec![1, 2, 0]).unwrap();
        assert_eq!(
            PermutationIndex::compose(&q, &p).unwrap().order(),
            &[0, 1, 2]
        );
        assert!(PermutationIndex::new(vec![0, 0]).is_err());
        assert!(PermutationIndex::new(vec![0, 2]).is_err());
    }

    #[test]
    fn is_sorted_examples() {
        assert!(is_sorted(&Column::numeric(vec![1i32, 2, 2, 3])).unwrap());
        assert!(!is_sorted(&Column::numeric(vec![2i32, 1])).unwrap());
        assert!(is_sorted(&Column::numeric(Vec::<i32>::new())).unwrap());
    }

    #[test]
    fn external_sort_budget_two() {
        let c = Column::numeric(vec![4i64, 1, 3, 1, 0, 4, 2]);
        let ext = external_sort(&c, 2).unwrap();
        assert_eq!(ext, argsort_stable(&c));
        assert!(matches!(external_sort(&c, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn external_sort_rejects_strings() {
        let c = Column::indexed(["b", "a", "c"]);
        assert!(matches!(external_sort(&c, 2), Err(Error::Type(_))));
    }

    #[test]
    fn permute_strings() {
        let perm = PermutationIndex::new(vec![2, 0, 1]).unwrap();
        let mut out = None;
        permute_into(&perm, &Column::indexed(["a", "b", "c"]), &mut out).unwrap();
        assert_eq!(out.unwrap(), Column::indexed(["c", "a", "b"]));
    }
}
