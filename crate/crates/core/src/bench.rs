//! Synthetic datasets and the scaling benchmarks run over them.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::column::Column;
use crate::convert::convert_cell;
use crate::error::{Error, Result};
use crate::kind::{FieldKind, ValueType};
use crate::merging::{ordered_map_left, write_mapped};
use crate::ordering::{external_sort_into, scratch_dir};
use crate::report::parse_kv;
use crate::store::{Dataset, FieldWriter};

pub const LEFT_TABLE: &str = "left";
pub const RIGHT_TABLE: &str = "right";
pub const LEFT_FK: &str = "left_fk_ids";
pub const RIGHT_ID: &str = "right_ids";
pub const GEN_CHUNK_ROWS: u64 = 1 << 16;

pub fn right_data_field(k: usize) -> String {
    format!("right_data_{k}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinBenchSpec {
    pub rows: u64,
    pub fields: usize,
    pub seed: u64,
}

fn finish_all(ds: &mut Dataset, writers: Vec<FieldWriter>) -> Result<()> {
    for w in writers {
        w.finish(ds)?;
    }
    Ok(())
}

/// Writes a `right` table of ids `0..rows` with `fields` int32 columns
/// uniform in `[0, 100)`, and a `left` table of sorted foreign keys where
/// each id appears 0, 1 or 2 times with probabilities 0.2, 0.6, 0.2.
/// Returns the (left, right) row counts.
pub fn generate_join_dataset(ds: &mut Dataset, spec: &JoinBenchSpec) -> Result<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let int64 = FieldKind::numeric(ValueType::Int64);
    let int32 = FieldKind::numeric(ValueType::Int32);

    ds.create_table(RIGHT_TABLE)?;
    let mut ids = ds.field_writer(RIGHT_TABLE, RIGHT_ID, int64.clone())?;
    let mut data = (0..spec.fields)
        .map(|k| ds.field_writer(RIGHT_TABLE, &right_data_field(k), int32.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut start = 0;
    while start < spec.rows {
        let end = (start + GEN_CHUNK_ROWS).min(spec.rows);
        ids.write(&Column::numeric(
            (start as i64..end as i64).collect::<Vec<_>>(),
        ))?;
        for w in &mut data {
            let values: Vec<i32> = (start..end).map(|_| rng.random_range(0..100)).collect();
            w.write(&Column::numeric(values))?;
        }
        start = end;
    }
    data.insert(0, ids);
    finish_all(ds, data)?;

    ds.create_table(LEFT_TABLE)?;
    let mut fk = ds.field_writer(LEFT_TABLE, LEFT_FK, int64)?;
    let mut buffer = Vec::with_capacity(GEN_CHUNK_ROWS as usize * 2);
    let mut left_rows = 0u64;
    for id in 0..spec.rows as i64 {
        let copies = match rng.random_range(0..10) {
            0 | 1 => 0,
            8 | 9 => 2,
            _ => 1,
        };
        for _ in 0..copies {
            buffer.push(id);
        }
        if buffer.len() >= GEN_CHUNK_ROWS as usize {
            left_rows += buffer.len() as u64;
            fk.write(&Column::numeric(std::mem::take(&mut buffer)))?;
        }
    }
    left_rows += buffer.len() as u64;
    fk.write(&Column::numeric(buffer))?;
    fk.finish(ds)?;
    Ok((left_rows, spec.rows))
}

/// Left-joins the first `fields` right data columns onto the left table,
/// writing them to table `out_table`. Returns the elapsed seconds.
pub fn run_left_join(ds: &mut Dataset, fields: usize, out_table: &str) -> Result<f64> {
    let started = Instant::now();
    let left = ds.field(LEFT_TABLE, LEFT_FK)?;
    let right = ds.field(RIGHT_TABLE, RIGHT_ID)?;
    let map = ordered_map_left(&left, &right)?;
    let data = (0..fields)
        .map(|k| ds.field(RIGHT_TABLE, &right_data_field(k)))
        .collect::<Result<Vec<_>>>()?;
    write_mapped(ds, &map.left_to_right, &data, true, out_table, "")?;
    Ok(started.elapsed().as_secs_f64())
}

/// Peak resident set size of this process, from `/proc/self/status`.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// A command whose process gets an address-space limit of `cap_bytes`.
pub fn capped_command(program: impl AsRef<Path>, cap_bytes: Option<u64>) -> Command {
    let mut cmd = Command::new(program.as_ref());
    if let Some(cap) = cap_bytes {
        // SAFETY: setrlimit is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(move || {
                let limit = libc::rlimit {
                    rlim_cur: cap as libc::rlim_t,
                    rlim_max: cap as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &limit) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    cmd
}

/// One cell of the join timing grid. `status` is `ok`, or `X` when the
/// join could not complete (for example under the memory cap).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub rows: u64,
    pub fields: usize,
    pub seconds: Option<f64>,
    pub peak_bytes: Option<u64>,
    pub status: String,
}

/// Runs each (rows, fields) cell in a child `exe bench join-cell` process
/// limited to `cap_bytes` of address space.
pub fn run_join_bench(
    exe: &Path,
    rows: &[u64],
    fields: &[usize],
    seed: u64,
    cap_bytes: Option<u64>,
    workdir: &Path,
) -> Result<Vec<BenchCell>> {
    let mut cells = Vec::new();
    for &r in rows {
        for &f in fields {
            let dir = workdir.join(format!("join-{r}-{f}"));
            let _ = std::fs::remove_dir_all(&dir);
            let output = capped_command(exe, cap_bytes)
                .args(["bench", "join-cell", "--rows", &r.to_string()])
                .args(["--fields", &f.to_string(), "--seed", &seed.to_string()])
                .arg("--dir")
                .arg(&dir)
                .output()?;
            let _ = std::fs::remove_dir_all(&dir);
            let kv = parse_kv(&String::from_utf8_lossy(&output.stdout));
            let ok = output.status.success();
            cells.push(BenchCell {
                rows: r,
                fields: f,
                seconds: kv
                    .get("seconds")
                    .and_then(|s| s.parse().ok())
                    .filter(|_| ok),
                peak_bytes: kv.get("peak_bytes").and_then(|s| s.parse().ok()),
                status: if ok { "ok" } else { "X" }.to_owned(),
            });
        }
    }
    Ok(cells)
}

/// The grid as CSV with a header row.
pub fn cells_to_csv(cells: &[BenchCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c).map_err(|e| Error::Format(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))
}

const WORDS: [&str; 8] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
];

/// Kind of column `c` in the wide read-benchmark table: an int64 id first,
/// then int32, float64 and indexed-string columns in turn.
fn wide_kind(c: usize) -> FieldKind {
    match c {
        0 => FieldKind::numeric(ValueType::Int64),
        c if c % 3 == 1 => FieldKind::numeric(ValueType::Int32),
        c if c % 3 == 2 => FieldKind::numeric(ValueType::Float64),
        _ => FieldKind::IndexedString,
    }
}

pub fn wide_field(c: usize) -> String {
    format!("f{c:02}")
}

/// Writes a `rows` by `columns` table of random values.
pub fn generate_wide_table(
    ds: &mut Dataset,
    table: &str,
    rows: u64,
    columns: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ds.create_table(table)?;
    let mut writers = (0..columns)
        .map(|c| ds.field_writer(table, &wide_field(c), wide_kind(c)))
        .collect::<Result<Vec<_>>>()?;
    let mut start = 0;
    while start < rows {
        let end = (start + GEN_CHUNK_ROWS).min(rows);
        for (c, w) in writers.iter_mut().enumerate() {
            let chunk = match wide_kind(c) {
                FieldKind::IndexedString => {
                    Column::indexed((start..end).map(|_| WORDS[rng.random_range(0..WORDS.len())]))
                }
                FieldKind::Numeric {
                    value_type: ValueType::Int64,
                    ..
                } => Column::numeric((start as i64..end as i64).collect::<Vec<_>>()),
                FieldKind::Numeric {
                    value_type: ValueType::Int32,
                    ..
                } => Column::numeric(
                    (start..end)
                        .map(|_| rng.random_range(-1_000_000..1_000_000))
                        .collect::<Vec<i32>>(),
                ),
                _ => Column::numeric(
                    (start..end)
                        .map(|_| rng.random_range(-1e6..1e6))
                        .collect::<Vec<f64>>(),
                ),
            };
            w.write(&chunk)?;
        }
        start = end;
    }
    finish_all(ds, writers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadBenchRow {
    pub fields: usize,
    pub columnar_seconds: f64,
    pub csv_seconds: f64,
    /// `csv_seconds / columnar_seconds`; absent when no fields were read.
    pub ratio: Option<f64>,
    pub bytes_read: u64,
}

/// Times reading the first `n` fields of `table` from the store against a
/// full parse of `csv_path` that converts the same `n` columns, keeping the
/// fastest of `repeats` runs of each.
pub fn run_read_bench(
    ds: &Dataset,
    table: &str,
    csv_path: &Path,
    counts: &[usize],
    repeats: usize,
) -> Result<Vec<ReadBenchRow>> {
    let all = ds.fields(table)?;
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        if n > all.len() {
            return Err(Error::Parameter(format!(
                "table '{table}' has {} fields, asked for {n}",
                all.len()
            )));
        }
        let fields = &all[..n];
        let mut columnar = f64::INFINITY;
        let mut csv_time = f64::INFINITY;
        let mut bytes_read = 0;
        for _ in 0..repeats.max(1) {
            let ((), stats) = crate::iostats::track(|| {
                let t = Instant::now();
                for f in fields {
                    std::hint::black_box(f.read_all().expect("field read"));
                }
                columnar = columnar.min(t.elapsed().as_secs_f64());
            });
            bytes_read = stats.values().map(|s| s.bytes).sum();
            if n > 0 {
                let t = Instant::now();
                std::hint::black_box(parse_csv_columns(csv_path, fields)?);
                csv_time = csv_time.min(t.elapsed().as_secs_f64());
            } else {
                csv_time = 0.0;
            }
        }
        rows.push(ReadBenchRow {
            fields: n,
            columnar_seconds: columnar,
            csv_seconds: csv_time,
            ratio: (n > 0).then(|| csv_time / columnar.max(1e-9)),
            bytes_read,
        });
    }
    Ok(rows)
}

/// Parses every record of a CSV, converting the columns named by `fields`.
fn parse_csv_columns(path: &Path, fields: &[crate::store::Field]) -> Result<u64> {
    let mut text = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut text)?;
    let mut reader = csv::Reader::from_reader(text.as_slice());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let wanted = fields
        .iter()
        .map(|f| {
            header
                .iter()
                .position(|h| h == f.name())
                .map(|i| (i, f.kind().clone()))
                .ok_or_else(|| Error::Import(format!("CSV lacks column '{}'", f.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut converted = vec![Vec::new(); wanted.len()];
    let mut record = csv::StringRecord::new();
    let mut rows = 0;
    while reader
        .read_record(&mut record)
        .map_err(|e| Error::Format(e.to_string()))?
    {
        for ((i, kind), out) in wanted.iter().zip(&mut converted) {
            out.push(convert_cell(kind, &record[*i])?);
        }
        rows += 1;
    }
    Ok(rows)
}

/// A fixed, well-mixed 64-bit function of the row number, used as sort
/// keys so results can be checked without storing the input.
pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scale_key(i: u64) -> i64 {
    splitmix64(i) as i64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortScaleReport {
    pub rows: u64,
    pub budget: usize,
    pub runs: usize,
    pub generate_seconds: f64,
    pub sort_seconds: f64,
    pub verify_seconds: f64,
    pub sorted: bool,
    pub permutation: bool,
}

/// Writes `rows` int64 keys to a dataset at `dir`, external-sorts them with
/// `budget` values in memory, streams the permutation into a field and
/// checks it: keys must be non-decreasing with ties in index order, and
/// every row must appear once.
pub fn run_sort_scale(dir: &Path, rows: u64, budget: usize) -> Result<SortScaleReport> {
    let mut ds = Dataset::create(dir)?;
    let started = Instant::now();
    ds.create_table("keys")?;
    let mut w = ds.field_writer("keys", "v", FieldKind::numeric(ValueType::Int64))?;
    let mut start = 0;
    while start < rows {
        let end = (start + GEN_CHUNK_ROWS).min(rows);
        w.write(&Column::numeric(
            (start..end).map(scale_key).collect::<Vec<_>>(),
        ))?;
        start = end;
    }
    w.finish(&mut ds)?;
    let generate_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let keys = ds.field("keys", "v")?;
    let mut order = ds.field_writer("keys", "order", FieldKind::numeric(ValueType::UInt64))?;
    let stats = external_sort_into(&keys, budget, &scratch_dir(), &mut |chunk: &[u64]| {
        order.write(&Column::numeric(chunk.to_vec()))
    })?;
    let order = order.finish(&mut ds)?;
    let sort_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut seen = vec![0u64; rows.div_ceil(64) as usize];
    let mut permutation = order.row_count() == rows;
    let mut sorted = true;
    let mut previous: Option<(i64, u64)> = None;
    for chunk in order.cursor(GEN_CHUNK_ROWS) {
        let chunk = chunk?;
        let Column::Numeric { values, .. } = &chunk else {
            unreachable!("order field is numeric")
        };
        let idx = <u64 as crate::kind::NativeType>::unwrap_ref(values).expect("uint64 order");
        for &i in idx {
            if i >= rows {
                permutation = false;
                continue;
            }
            let (word, bit) = ((i / 64) as usize, 1u64 << (i % 64));
            if seen[word] & bit != 0 {
                permutation = false;
            }
            seen[word] |= bit;
            let here = (scale_key(i), i);
            if previous.is_some_and(|p| p > here) {
                sorted = false;
            }
            previous = Some(here);
        }
    }
    permutation &= seen.iter().map(|w| w.count_ones() as u64).sum::<u64>() == rows;
    Ok(SortScaleReport {
        rows,
        budget,
        runs: stats.runs,
        generate_seconds,
        sort_seconds,
        verify_seconds: started.elapsed().as_secs_f64(),
        sorted,
        permutation,
    })
}

/// Default directory for benchmark datasets.
pub fn bench_dir() -> PathBuf {
    scratch_dir().join("colcur-bench")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn join_data(seed: u64, rows: u64, fields: usize) -> (tempfile::TempDir, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::create(dir.path().join("ds")).unwrap();
        generate_join_dataset(&mut ds, &JoinBenchSpec { rows, fields, seed }).unwrap();
        (dir, ds)
    }

    #[test]
    fn generator_shape() {
        let (_d, ds) = join_data(7, 5000, 2);
        let ids = ds.field(RIGHT_TABLE, RIGHT_ID).unwrap().read_all().unwrap();
        assert_eq!(ids, Column::numeric((0..5000i64).collect::<Vec<_>>()));
        let fk = ds.field(LEFT_TABLE, LEFT_FK).unwrap().read_all().unwrap();
        assert!(crate::ordering::is_sorted(&fk).unwrap());
        let counts = crate::aggregation::get_spans(&fk).unwrap();
        // roughly 20% of ids missing and 20% doubled
        let present = counts.span_count() as f64 / 5000.0;
        assert!((0.75..0.85).contains(&present), "{present}");
        for k in 0..2 {
            let Column::Numeric { values, .. } = ds
                .field(RIGHT_TABLE, &right_data_field(k))
                .unwrap()
                .read_all()
                .unwrap()
            else {
                panic!()
            };
            assert!((0..values.len()).all(|i| (0..100).contains(&values.get(i).as_i64().unwrap())));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let (_a, a) = join_data(3, 1000, 1);
        let (_b, b) = join_data(3, 1000, 1);
        for (t, f) in [(LEFT_TABLE, LEFT_FK), (RIGHT_TABLE, "right_data_0")] {
            let fa = std::fs::read(a.field(t, f).unwrap().path("dat")).unwrap();
            let fb = std::fs::read(b.field(t, f).unwrap().path("dat")).unwrap();
            assert_eq!(fa, fb);
        }
        let (_c, c) = join_data(4, 1000, 1);
        assert_ne!(
            a.field(LEFT_TABLE, LEFT_FK).unwrap().read_all().unwrap(),
            c.field(LEFT_TABLE, LEFT_FK).unwrap().read_all().unwrap()
        );
    }

    #[test]
    fn empty_spec() {
        let (_d, ds) = join_data(1, 0, 1);
        assert_eq!(ds.table(LEFT_TABLE).unwrap().row_count, 0);
        assert_eq!(ds.table(RIGHT_TABLE).unwrap().row_count, 0);
    }

    #[test]
    fn small_sort_scale() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_sort_scale(&dir.path().join("s"), 10_000, 1000).unwrap();
        assert!(r.sorted && r.permutation);
        assert_eq!(r.runs, 10);
    }

    #[test]
    fn zero_field_read_reads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::create(dir.path().join("w")).unwrap();
        generate_wide_table(&mut ds, "t", 100, 4, 1).unwrap();
        let csv = dir.path().join("t.csv");
        crate::export::export_csv(&ds, "t", None, std::fs::File::create(&csv).unwrap()).unwrap();
        let rows = run_read_bench(&ds, "t", &csv, &[0, 2], 1).unwrap();
        assert_eq!(rows[0].bytes_read, 0);
        assert_eq!(rows[0].ratio, None);
        assert!(rows[1].bytes_read > 0);
    }
}
