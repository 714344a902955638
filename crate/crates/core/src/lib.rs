//! Out-of-core columnar datasets.
//!
//! Tables are stored column by column under a dataset directory and read in
//! row ranges, so operations only touch the fields they need. Sorting is
//! expressed as permutation indices, joins as index maps over sorted keys,
//! and aggregations as spans over sorted keys; all of them stream.

pub mod aggregation;
pub mod bench;
pub mod column;
pub mod convert;
pub mod error;
pub mod export;
pub mod import;
pub mod iostats;
pub mod journal;
pub mod kind;
pub mod merging;
pub mod ordering;
pub mod report;
pub mod schema;
pub mod store;

pub use aggregation::{bucket_spans, get_spans, span_reduce, Reducer, SpanIndex};
pub use column::{Cell, Column, ColumnBuilder, NumericValues, Value};
pub use error::{Error, Result};
pub use export::export_csv;
pub use import::{import_csv, ConversionStats, ImportJob, TableImport};
pub use journal::{journal_table, JournalOptions, JournalResult};
pub use kind::{FieldKind, NativeType, ValueType};
pub use merging::{
    ordered_map_left, ordered_merge_inner, ordered_merge_left, ordered_merge_right, JoinMap,
    INVALID_ROW,
};
pub use ordering::{
    apply_permutation, argsort_stable, external_sort, is_sorted, multi_key_argsort,
    PermutationIndex,
};
pub use report::Report;
pub use schema::{parse_schema, SchemaDoc, TableSchema};
pub use store::{
    ChunkCursor, ColumnSink, ColumnSource, Dataset, DatasetMeta, Field, FieldMeta, FieldWriter,
    Mode, ProvenanceRecord, TableMeta,
};
