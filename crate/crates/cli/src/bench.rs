use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Subcommand};

use colcur::bench::{
    bench_dir, cells_to_csv, generate_join_dataset, generate_wide_table, peak_rss_bytes,
    run_join_bench, run_left_join, run_read_bench, run_sort_scale, JoinBenchSpec,
};
use colcur::export::export_csv;
use colcur::{Dataset, Report, Result};

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Write the synthetic left/right join dataset.
    GenJoin(GenJoinArgs),
    /// Generate one join dataset and time a left join over it.
    JoinCell(GenJoinArgs),
    /// Run a grid of join cells, each in a memory-capped child process.
    Join(JoinGridArgs),
    /// Compare columnar field reads against re-parsing the CSV export.
    Read(ReadArgs),
    /// External-sort generated int64 keys and verify the result.
    SortScale(SortScaleArgs),
}

#[derive(Args, Debug)]
pub struct GenJoinArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    rows: u64,
    #[arg(long, default_value_t = 1)]
    fields: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct JoinGridArgs {
    /// Row counts (comma-separated).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1048576,2097152,4194304,8388608,16777216"
    )]
    rows: Vec<u64>,
    /// Field counts (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    fields: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Address-space limit per cell, in bytes.
    #[arg(long)]
    cap_bytes: Option<u64>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Also write the grid as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReadArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    rows: u64,
    #[arg(long, default_value_t = 32)]
    columns: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct SortScaleArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    rows: u64,
    #[arg(long, default_value_t = 10_000_000)]
    budget: usize,
}

pub fn run(command: BenchCommand) -> Result<Report> {
    let mut r = Report::new();
    match command {
        BenchCommand::GenJoin(a) => {
            let mut ds = Dataset::create(&a.dir)?;
            let spec = JoinBenchSpec {
                rows: a.rows,
                fields: a.fields,
                seed: a.seed,
            };
            let (left, right) = generate_join_dataset(&mut ds, &spec)?;
            r.set("left_rows", left).set("right_rows", right);
        }
        BenchCommand::JoinCell(a) => {
            let mut ds = Dataset::create(&a.dir)?;
            let spec = JoinBenchSpec {
                rows: a.rows,
                fields: a.fields,
                seed: a.seed,
            };
            let (left, right) = generate_join_dataset(&mut ds, &spec)?;
            let seconds = run_left_join(&mut ds, a.fields, "joined")?;
            r.set("rows", a.rows)
                .set("fields", a.fields)
                .set("left_rows", left)
                .set("right_rows", right)
                .set("seconds", seconds)
                .set("peak_bytes", peak_rss_bytes().unwrap_or(0));
        }
        BenchCommand::Join(a) => {
            let exe = std::env::current_exe()?;
            let workdir = a.workdir.unwrap_or_else(bench_dir);
            std::fs::create_dir_all(&workdir)?;
            let cells = run_join_bench(&exe, &a.rows, &a.fields, a.seed, a.cap_bytes, &workdir)?;
            if let Some(path) = &a.csv {
                std::fs::write(path, cells_to_csv(&cells)?)?;
            }
            for c in &cells {
                let key = format!("{}x{}", c.rows, c.fields);
                match c.seconds {
                    Some(s) => r.set(format!("{key}.seconds"), s),
                    None => r.set(format!("{key}.seconds"), "X"),
                };
                r.set(format!("{key}.peak_bytes"), c.peak_bytes.unwrap_or(0));
                r.set(format!("{key}.status"), c.status.clone());
            }
        }
        BenchCommand::Read(a) => {
            let mut ds = Dataset::create(&a.dir)?;
            generate_wide_table(&mut ds, "wide", a.rows, a.columns, a.seed)?;
            let csv = a.dir.join("wide.csv");
            export_csv(&ds, "wide", None, BufWriter::new(File::create(&csv)?))?;
            for row in run_read_bench(&ds, "wide", &csv, &a.counts, a.repeats)? {
                let n = row.fields;
                r.set(format!("n{n}.columnar_seconds"), row.columnar_seconds);
                r.set(format!("n{n}.csv_seconds"), row.csv_seconds);
                r.set(format!("n{n}.bytes_read"), row.bytes_read);
                if let Some(ratio) = row.ratio {
                    r.set(format!("n{n}.ratio"), ratio);
                }
            }
        }
        BenchCommand::SortScale(a) => {
            let s = run_sort_scale(&a.dir, a.rows, a.budget)?;
            r.set("rows", s.rows)
                .set("budget", s.budget)
                .set("runs", s.runs)
                .set("generate_seconds", s.generate_seconds)
                .set("sort_seconds", s.sort_seconds)
                .set("verify_seconds", s.verify_seconds)
                .set("sorted", s.sorted)
                .set("permutation", s.permutation)
                .set("peak_bytes", peak_rss_bytes().unwrap_or(0));
        }
    }
    Ok(r)
}
