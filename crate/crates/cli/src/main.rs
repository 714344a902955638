//! `colcur`: import, journal, inspect and transform columnar datasets.
//!
//! Reports go to stdout as `key=value` lines (or one JSON object with
//! `--json`); diagnostics go to stderr. Exit status is 0 on success, 1 on
//! any error and 2 on a usage error.

mod bench;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use colcur::convert::parse_datetime;
use colcur::export::{export_csv, exported_fields};
use colcur::import::{import_csv, ImportJob};
use colcur::journal::{journal_table, JournalOptions};
use colcur::merging::{ordered_map_left, write_mapped, INVALID_ROW};
use colcur::ordering::{
    apply_permutation, external_sort_into, multi_key_argsort, scratch_dir, PermutationIndex,
};
use colcur::schema::parse_schema;
use colcur::store::{ColumnSource, Dataset, Field, Mode, ProvenanceRecord};
use colcur::{
    bucket_spans, get_spans, span_reduce, Column, Error, FieldKind, Reducer, Report, Result,
    ValueType,
};

pub const CLI_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "colcur", version, about = "Out-of-core columnar dataset tool")]
struct Cli {
    /// Print the report as one JSON object instead of key=value lines.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert CSV files into a new dataset using a JSON schema.
    Import(ImportArgs),
    /// Merge two snapshot datasets into a journaled dataset.
    Journal(JournalArgs),
    /// List tables and fields without reading column data.
    Info(InfoArgs),
    /// Write fields of a table as CSV.
    Export(ExportArgs),
    /// Compute a sort order and optionally apply it.
    Sort(SortArgs),
    /// Join two tables on sorted keys.
    Join(JoinArgs),
    /// Reduce a field over spans of a sorted key.
    Aggregate(AggregateArgs),
    /// Generate synthetic data and run scaling benchmarks.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[arg(long)]
    schema: PathBuf,
    /// `table=path.csv`; repeat for each table.
    #[arg(long = "input", required = true, value_parser = parse_input)]
    inputs: Vec<(String, PathBuf)>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = colcur::import::DEFAULT_CHUNK_ROWS)]
    chunk_rows: usize,
    /// Store unparseable cells as invalid and count them instead of failing.
    #[arg(long)]
    lenient: bool,
}

fn parse_input(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((t, p)) if !t.is_empty() && !p.is_empty() => Ok((t.to_owned(), p.into())),
        _ => Err(format!("expected table=path, got '{s}'")),
    }
}

#[derive(Args, Debug)]
struct JournalArgs {
    #[arg(long)]
    old: PathBuf,
    #[arg(long)]
    new: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Tables to journal; all tables present in both snapshots by default.
    #[arg(long = "table")]
    tables: Vec<String>,
    /// Key fields, most significant first.
    #[arg(long = "key", required = true)]
    keys: Vec<String>,
    /// Old snapshot time: posix seconds or `YYYY-MM-DD[ hh:mm:ss]`.
    #[arg(long, value_parser = parse_time)]
    t_old: f64,
    #[arg(long, value_parser = parse_time)]
    t_new: f64,
    /// Close keys missing from the new snapshot at t-new.
    #[arg(long)]
    close_only_old: bool,
}

fn parse_time(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .or_else(|| parse_datetime(s))
        .ok_or_else(|| format!("'{s}' is neither posix seconds nor a date"))
}

#[derive(Args, Debug)]
struct InfoArgs {
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    table: String,
    /// Comma-separated field names; all fields by default.
    #[arg(long, value_delimiter = ',')]
    fields: Vec<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SortArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    table: String,
    /// Sort keys, most significant first.
    #[arg(long = "key", required = true)]
    keys: Vec<String>,
    /// Sort a single numeric key externally with this many values in memory.
    #[arg(long)]
    budget: Option<usize>,
    /// Write every field of the table, reordered, into this table.
    #[arg(long)]
    output_table: Option<String>,
    /// Store the permutation as a uint64 field of the table.
    #[arg(long)]
    index_field: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum How {
    Left,
    Right,
    Inner,
}

#[derive(Args, Debug)]
struct JoinArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    left: String,
    #[arg(long)]
    right: String,
    #[arg(long)]
    left_key: String,
    #[arg(long)]
    right_key: String,
    #[arg(long, value_enum, default_value = "left")]
    how: How,
    /// Left fields to carry into the output (comma-separated).
    #[arg(long, value_delimiter = ',')]
    left_fields: Vec<String>,
    /// Right fields to carry into the output (comma-separated).
    #[arg(long, value_delimiter = ',')]
    right_fields: Vec<String>,
    #[arg(long)]
    output_table: String,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    table: String,
    /// Sorted key field defining the spans.
    #[arg(long)]
    key: String,
    /// Field to reduce; the key itself by default.
    #[arg(long)]
    field: Option<String>,
    #[arg(long, value_parser = parse_reducer)]
    reducer: Reducer,
    /// Group days into buckets of this many days instead of equal keys.
    #[arg(long)]
    bucket_days: Option<i64>,
    #[arg(long)]
    output_table: String,
}

fn parse_reducer(s: &str) -> std::result::Result<Reducer, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli.command) {
        Ok(report) => {
            let text = if json {
                format!("{}\n", report.to_json())
            } else {
                report.to_kv()
            };
            let mut out = io::stdout().lock();
            if out
                .write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .is_err()
            {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<Report> {
    match command {
        Command::Import(a) => cmd_import(a),
        Command::Journal(a) => cmd_journal(a),
        Command::Info(a) => cmd_info(a),
        Command::Export(a) => cmd_export(a),
        Command::Sort(a) => cmd_sort(a),
        Command::Join(a) => cmd_join(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Bench(b) => bench::run(b),
    }
}

fn cmd_import(a: ImportArgs) -> Result<Report> {
    let schema = parse_schema(&std::fs::read_to_string(&a.schema)?)?;
    let job = ImportJob {
        schema,
        inputs: a.inputs,
        chunk_rows: a.chunk_rows,
        lenient: a.lenient,
    };
    for (table, _) in &job.inputs {
        if job.schema.table(table).is_none() {
            return Err(Error::Schema(format!(
                "table '{table}' is not in the schema"
            )));
        }
    }
    let mut ds = Dataset::create(&a.output)?;
    let tables = import_csv(&mut ds, &job)?;
    let mut r = Report::new();
    r.set("tables", tables.len());
    for t in &tables {
        r.set(format!("{}.rows", t.table), t.row_count);
        r.set(format!("{}.seconds", t.table), t.seconds);
        for s in &t.fields {
            if s.rows_invalid > 0 {
                eprintln!(
                    "warning: {}.{}: {} cells could not be converted",
                    t.table, s.field, s.rows_invalid
                );
            }
            if s.rows_empty > 0 {
                r.set(format!("{}.{}.rows_empty", t.table, s.field), s.rows_empty);
            }
            if s.rows_invalid > 0 {
                r.set(
                    format!("{}.{}.rows_invalid", t.table, s.field),
                    s.rows_invalid,
                );
            }
            if s.freetext_rows > 0 {
                r.set(
                    format!("{}.{}.freetext_rows", t.table, s.field),
                    s.freetext_rows,
                );
            }
        }
    }
    Ok(r)
}

fn cmd_journal(a: JournalArgs) -> Result<Report> {
    let started = Instant::now();
    let old = Dataset::open(&a.old, Mode::Read)?;
    let new = Dataset::open(&a.new, Mode::Read)?;
    let tables: Vec<String> = if a.tables.is_empty() {
        old.table_names()
            .into_iter()
            .filter(|t| new.has_table(t))
            .map(str::to_owned)
            .collect()
    } else {
        a.tables.clone()
    };
    let mut out = Dataset::create(&a.output)?;
    let options = JournalOptions {
        key_fields: a.keys.clone(),
        t_old: a.t_old,
        t_new: a.t_new,
        close_only_old: a.close_only_old,
    };
    let mut r = Report::new();
    r.set("tables", tables.join(","));
    for t in &tables {
        let table_started = Instant::now();
        let res = journal_table(&old, t, &new, t, &mut out, t, &options)?;
        r.set(format!("{t}.old_rows"), res.old_row_count);
        r.set(format!("{t}.new_rows"), res.new_row_count);
        r.set(format!("{t}.rows_only_old"), res.rows_only_old);
        r.set(format!("{t}.rows_only_new"), res.rows_only_new);
        r.set(format!("{t}.rows_updated"), res.rows_updated);
        r.set(format!("{t}.rows_not_updated"), res.rows_not_updated);
        r.set(format!("{t}.journaled_rows"), res.journaled_row_count);
        r.set(
            format!("{t}.seconds"),
            table_started.elapsed().as_secs_f64(),
        );
    }
    r.set("seconds", started.elapsed().as_secs_f64());
    Ok(r)
}

fn kind_text(kind: &FieldKind) -> String {
    match kind {
        FieldKind::FixedString { length } => format!("fixed_string({length})"),
        FieldKind::IndexedString => "indexed_string".into(),
        FieldKind::Numeric {
            value_type,
            has_validity,
        } => format!(
            "numeric({value_type}{})",
            if *has_validity { ",optional" } else { "" }
        ),
        FieldKind::Categorical {
            value_type, leaky, ..
        } => format!(
            "categorical({value_type}{})",
            if *leaky { ",leaky" } else { "" }
        ),
        FieldKind::DateTime {
            has_day,
            has_validity,
        } => format!(
            "datetime({}{})",
            if *has_day { "day" } else { "" },
            if *has_validity { ",optional" } else { "" }
        ),
    }
}

fn cmd_info(a: InfoArgs) -> Result<Report> {
    let ds = Dataset::open(&a.dataset, Mode::Read)?;
    let mut r = Report::new();
    r.set("format_version", ds.meta().format_version.clone());
    r.set("tables", ds.meta().tables.len());
    for t in &ds.meta().tables {
        r.set(format!("{}.rows", t.name), t.row_count);
        for f in &t.fields {
            r.set(format!("{}.{}", t.name, f.name), kind_text(&f.kind));
        }
    }
    r.set("provenance_records", ds.provenance().len());
    Ok(r)
}

fn cmd_export(a: ExportArgs) -> Result<Report> {
    let ds = Dataset::open(&a.dataset, Mode::Read)?;
    let fields = if a.fields.is_empty() {
        exported_fields(&ds, &a.table)?
    } else {
        for f in &a.fields {
            ds.field(&a.table, f)?;
        }
        a.fields
    };
    let out = BufWriter::new(File::create(&a.output)?);
    let rows = export_csv(&ds, &a.table, Some(&fields), out)?;
    let mut r = Report::new();
    r.set("table", a.table)
        .set("fields", fields.join(","))
        .set("rows", rows);
    Ok(r)
}

fn cmd_sort(a: SortArgs) -> Result<Report> {
    let started = Instant::now();
    let mut ds = Dataset::open(&a.dataset, Mode::ReadWrite)?;
    let keys = a
        .keys
        .iter()
        .map(|k| ds.field(&a.table, k))
        .collect::<Result<Vec<_>>>()?;
    let perm = match a.budget {
        Some(budget) => {
            if keys.len() != 1 {
                return Err(Error::Parameter(
                    "external sort takes exactly one key".into(),
                ));
            }
            let mut order = Vec::with_capacity(keys[0].row_count() as usize);
            external_sort_into(&keys[0], budget, &scratch_dir(), &mut |c: &[u64]| {
                order.extend_from_slice(c);
                Ok(())
            })?;
            PermutationIndex::new(order)?
        }
        None => {
            let sources: Vec<&dyn ColumnSource> = keys.iter().map(|k| k as _).collect();
            multi_key_argsort(&sources)?
        }
    };
    if let Some(out) = &a.output_table {
        let fields = ds.fields(&a.table)?;
        apply_permutation(&mut ds, &perm, &fields, out)?;
    }
    if let Some(name) = &a.index_field {
        ds.write_field(
            &a.table,
            name,
            FieldKind::numeric(ValueType::UInt64),
            &Column::numeric(perm.order().to_vec()),
        )?;
    }
    let mut record = ProvenanceRecord::new("sort", CLI_VERSION)
        .param("table", &a.table)
        .param("keys", a.keys.join(","));
    if let Some(b) = a.budget {
        record = record.param("budget", b);
    }
    if let Some(o) = &a.output_table {
        record = record.param("output_table", o);
    }
    ds.append_provenance(record)?;
    let mut r = Report::new();
    r.set("table", a.table)
        .set("rows", perm.len())
        .set("identity", perm.is_identity())
        .set(
            "method",
            if a.budget.is_some() {
                "external"
            } else {
                "in_memory"
            },
        )
        .set("seconds", started.elapsed().as_secs_f64());
    Ok(r)
}

fn fields_of(ds: &Dataset, table: &str, names: &[String]) -> Result<Vec<Field>> {
    names.iter().map(|n| ds.field(table, n)).collect()
}

fn cmd_join(a: JoinArgs) -> Result<Report> {
    let started = Instant::now();
    let mut ds = Dataset::open(&a.dataset, Mode::ReadWrite)?;
    let left_key = ds.field(&a.left, &a.left_key)?;
    let right_key = ds.field(&a.right, &a.right_key)?;
    let left_fields = fields_of(&ds, &a.left, &a.left_fields)?;
    let right_fields = fields_of(&ds, &a.right, &a.right_fields)?;
    let map = ordered_map_left(&left_key, &right_key)?;
    let out = &a.output_table;
    let rows = match a.how {
        How::Left => {
            let identity: Vec<u64> = (0..left_key.row_count()).collect();
            write_mapped(&mut ds, &identity, &left_fields, false, out, "")?;
            write_mapped(&mut ds, &map.left_to_right, &right_fields, true, out, "")?;
            left_key.row_count()
        }
        How::Right => {
            let identity: Vec<u64> = (0..right_key.row_count()).collect();
            write_mapped(&mut ds, &identity, &right_fields, false, out, "")?;
            write_mapped(&mut ds, &map.right_to_left(), &left_fields, true, out, "")?;
            right_key.row_count()
        }
        How::Inner => {
            let (l, rr) = map.inner_pairs();
            write_mapped(&mut ds, &l, &left_fields, false, out, "")?;
            write_mapped(&mut ds, &rr, &right_fields, false, out, "")?;
            l.len() as u64
        }
    };
    let how = format!("{:?}", a.how).to_lowercase();
    ds.append_provenance(
        ProvenanceRecord::new("join", CLI_VERSION)
            .param("how", &how)
            .param("left", format!("{}.{}", a.left, a.left_key))
            .param("right", format!("{}.{}", a.right, a.right_key))
            .param("output_table", out),
    )?;
    let unmatched = map
        .left_to_right
        .iter()
        .filter(|&&j| j == INVALID_ROW)
        .count();
    let mut r = Report::new();
    r.set("how", how)
        .set("rows", rows)
        .set("left_rows", left_key.row_count())
        .set("right_rows", right_key.row_count())
        .set("unmatched_left_rows", unmatched)
        .set("key_comparisons", map.comparisons)
        .set("seconds", started.elapsed().as_secs_f64());
    Ok(r)
}

fn cmd_aggregate(a: AggregateArgs) -> Result<Report> {
    let started = Instant::now();
    let mut ds = Dataset::open(&a.dataset, Mode::ReadWrite)?;
    let key = ds.field(&a.table, &a.key)?;
    let field_name = a.field.clone().unwrap_or_else(|| a.key.clone());
    let values = ds.field(&a.table, &field_name)?;
    let spans = match a.bucket_days {
        Some(days) => bucket_spans(&key, days)?,
        None => get_spans(&key)?,
    };
    let reduced = span_reduce(&spans, &values, a.reducer)?;
    let starts: Vec<u64> = spans.spans().map(|(s, _)| s).collect();
    let mut key_out = None;
    colcur::merging::gather(&starts, &key, false, &mut key_out)?;
    let key_out = key_out.unwrap_or_else(|| Column::empty_for(key.kind()));
    if !ds.has_table(&a.output_table) {
        ds.create_table(&a.output_table)?;
    }
    ds.write_field(&a.output_table, &a.key, key.kind().clone(), &key_out)?;
    let out_name = format!("{field_name}_{}", a.reducer);
    let out_kind = kind_of(&reduced, values.kind());
    ds.write_field(&a.output_table, &out_name, out_kind, &reduced)?;
    let mut record = ProvenanceRecord::new("aggregate", CLI_VERSION)
        .param("table", &a.table)
        .param("key", &a.key)
        .param("field", &field_name)
        .param("reducer", a.reducer)
        .param("output_table", &a.output_table);
    if let Some(d) = a.bucket_days {
        record = record.param("bucket_days", d);
    }
    ds.append_provenance(record)?;
    let mut r = Report::new();
    r.set("spans", spans.span_count())
        .set("boundaries", format!("{:?}", spans.boundaries()))
        .set("field", out_name)
        .set("seconds", started.elapsed().as_secs_f64());
    Ok(r)
}

/// Storage kind for a reduced column, keeping categorical keys and string
/// lengths from the source kind.
fn kind_of(column: &Column, source: &FieldKind) -> FieldKind {
    match column {
        Column::FixedString(_) | Column::Categorical(_) => source.clone(),
        Column::IndexedString(_) => FieldKind::IndexedString,
        Column::Numeric { values, validity } => FieldKind::Numeric {
            value_type: values.value_type(),
            has_validity: validity.is_some(),
        },
        Column::DateTime { validity, days, .. } => FieldKind::DateTime {
            has_day: days.is_some(),
            has_validity: validity.is_some(),
        },
    }
}
