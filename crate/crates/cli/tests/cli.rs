use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use colcur::report::parse_kv;

const EXE: &str = env!("CARGO_BIN_EXE_colcur");

const SCHEMA: &str = r#"{"schema": {"p": {"primary_keys": ["id"], "fields": {
  "id": {"field_type": "numeric", "value_type": "int64"},
  "age": {"field_type": "numeric", "value_type": "int32", "optional": true},
  "name": {"field_type": "indexed_string"},
  "seen": {"field_type": "date", "create_day_field": true}
}}}}"#;

fn colcur(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> BTreeMap<String, String> {
    let out = colcur(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    parse_kv(&String::from_utf8_lossy(&out.stdout))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Imports `csv` as table `p` into `<dir>/<name>`.
fn import(dir: &Path, name: &str, csv: &str) -> std::path::PathBuf {
    let schema = dir.join("schema.json");
    std::fs::write(&schema, SCHEMA).unwrap();
    let input = dir.join(format!("{name}.csv"));
    std::fs::write(&input, csv).unwrap();
    let out = dir.join(name);
    ok(&[
        "import",
        "--schema",
        s(&schema),
        "--input",
        &format!("p={}", s(&input)),
        "--output",
        s(&out),
    ]);
    out
}

const CSV: &str =
    "id,age,name,seen\n3,40,\"c, x\",2020-01-09\n1,,a,2020-01-01\n2,17,b,2020-01-03\n";

#[test]
fn import_info_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let info = ok(&["info", s(&ds)]);
    assert_eq!(info["tables"], "1");
    assert_eq!(info["p.rows"], "3");
    assert_eq!(info["p.age"], "numeric(int32,optional)");
    let out = dir.path().join("out.csv");
    let report = ok(&[
        "export",
        "--dataset",
        s(&ds),
        "--table",
        "p",
        "--output",
        s(&out),
    ]);
    assert_eq!(report["rows"], "3");
    assert_eq!(std::fs::read_to_string(&out).unwrap(), CSV);
}

#[test]
fn json_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let out = colcur(&["--json", "info", s(&ds)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["p.rows"], 3);
}

#[test]
fn empty_dataset_info() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    colcur::Dataset::create(&ds).unwrap();
    assert_eq!(ok(&["info", s(&ds)])["tables"], "0");
}

#[test]
fn errors_exit_one_and_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let out = dir.path().join("x.csv");
    let bad = colcur(&[
        "export",
        "--dataset",
        s(&ds),
        "--table",
        "p",
        "--fields",
        "id,nope",
        "--output",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
    assert_eq!(colcur(&["export", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        colcur(&["info", s(&dir.path().join("missing"))])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn sort_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let r = ok(&[
        "sort",
        "--dataset",
        s(&ds),
        "--table",
        "p",
        "--key",
        "seen",
        "--output-table",
        "ps",
        "--index-field",
        "order",
    ]);
    assert_eq!(r["identity"], "false");
    let out = dir.path().join("ps.csv");
    ok(&[
        "export",
        "--dataset",
        s(&ds),
        "--table",
        "ps",
        "--fields",
        "id",
        "--output",
        s(&out),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "id\n1\n2\n3\n");

    let a = ok(&[
        "aggregate",
        "--dataset",
        s(&ds),
        "--table",
        "ps",
        "--key",
        "seen",
        "--field",
        "age",
        "--reducer",
        "count",
        "--bucket-days",
        "7",
        "--output-table",
        "weekly",
    ]);
    assert_eq!(a["spans"], "2");
    ok(&[
        "export",
        "--dataset",
        s(&ds),
        "--table",
        "weekly",
        "--output",
        s(&out),
    ]);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "seen,age_count\n2020-01-01,2\n2020-01-09,1\n"
    );
    let info = ok(&["info", s(&ds)]);
    assert_eq!(info["provenance_records"], "3");
}

#[test]
fn unsorted_join_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let out = colcur(&[
        "join",
        "--dataset",
        s(&ds),
        "--left",
        "p",
        "--right",
        "p",
        "--left-key",
        "id",
        "--right-key",
        "id",
        "--output-table",
        "j",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sorted"));
}

#[test]
fn join_generated_tables() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("g");
    let g = ok(&[
        "bench",
        "gen-join",
        "--dir",
        s(&ds),
        "--rows",
        "50",
        "--fields",
        "2",
        "--seed",
        "3",
    ]);
    let common = [
        "join",
        "--dataset",
        s(&ds),
        "--left",
        "left",
        "--right",
        "right",
        "--left-key",
        "left_fk_ids",
        "--right-key",
        "right_ids",
    ];
    let left = ok(&[
        &common[..],
        &[
            "--how",
            "left",
            "--right-fields",
            "right_data_0",
            "--output-table",
            "lj",
        ],
    ]
    .concat());
    assert_eq!(left["rows"], g["left_rows"]);
    let right = ok(&[
        &common[..],
        &[
            "--how",
            "right",
            "--left-fields",
            "left_fk_ids",
            "--output-table",
            "rj",
        ],
    ]
    .concat());
    assert_eq!(right["rows"], g["right_rows"]);
    let inner = ok(&[
        &common[..],
        &[
            "--how",
            "inner",
            "--right-fields",
            "right_ids",
            "--output-table",
            "ij",
        ],
    ]
    .concat());
    assert_eq!(inner["rows"], g["left_rows"]);
}

#[test]
fn journal_round() {
    let dir = tempfile::tempdir().unwrap();
    let v1 = import(
        dir.path(),
        "v1",
        "id,age,name,seen\n1,,a,2020-01-01\n2,17,b,2020-01-03\n",
    );
    let v2 = import(
        dir.path(),
        "v2",
        "id,age,name,seen\n2,18,b,2020-01-03\n3,5,c,2020-01-04\n",
    );
    let j1 = dir.path().join("j1");
    let r = ok(&[
        "journal",
        "--old",
        s(&v1),
        "--new",
        s(&v2),
        "--output",
        s(&j1),
        "--key",
        "id",
        "--t-old",
        "2020-02-01",
        "--t-new",
        "2020-03-01",
    ]);
    assert_eq!(
        (
            r["p.rows_only_old"].as_str(),
            r["p.rows_only_new"].as_str(),
            r["p.rows_updated"].as_str()
        ),
        ("1", "1", "1")
    );
    assert_eq!(r["p.journaled_rows"], "4");
    let j2 = dir.path().join("j2");
    let again = ok(&[
        "journal",
        "--old",
        s(&j1),
        "--new",
        s(&v2),
        "--output",
        s(&j2),
        "--key",
        "id",
        "--t-old",
        "2020-03-01",
        "--t-new",
        "2020-04-01",
    ]);
    assert_eq!(
        (
            again["p.rows_updated"].as_str(),
            again["p.rows_only_new"].as_str()
        ),
        ("0", "0")
    );

    let bad = colcur(&[
        "journal",
        "--old",
        s(&v1),
        "--new",
        s(&v2),
        "--output",
        s(&dir.path().join("j3")),
        "--key",
        "id",
        "--t-old",
        "5",
        "--t-new",
        "1",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn scratch_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let ds = import(dir.path(), "ds", CSV);
    let args = [
        "sort",
        "--dataset",
        s(&ds),
        "--table",
        "p",
        "--key",
        "id",
        "--budget",
        "2",
    ];
    let scratch = dir.path().join("scratch");
    std::fs::create_dir(&scratch).unwrap();
    let out = Command::new(EXE)
        .args(args)
        .env("COLCUR_SCRATCH", &scratch)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read_dir(&scratch).unwrap().count(),
        0,
        "scratch files left behind"
    );

    let not_a_dir = dir.path().join("file");
    std::fs::write(&not_a_dir, "").unwrap();
    let out = Command::new(EXE)
        .args(args)
        .env("COLCUR_SCRATCH", &not_a_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sort_scale_bench_small() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok(&[
        "bench",
        "sort-scale",
        "--dir",
        s(&dir.path().join("s")),
        "--rows",
        "5000",
        "--budget",
        "700",
    ]);
    assert_eq!(
        (
            r["sorted"].as_str(),
            r["permutation"].as_str(),
            r["runs"].as_str()
        ),
        ("true", "true", "8")
    );
}
