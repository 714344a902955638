//! Per-thread counters of bytes read from field files.
//!
//! Every read of a `.dat`, `.idx`, `.valid` or `.day` file goes through
//! [`record`], so tests can assert which files an operation touched.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

thread_local! {
    static READS: RefCell<BTreeMap<PathBuf, FileReads>> = const { RefCell::new(BTreeMap::new()) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FileReads {
    pub calls: u64,
    pub bytes: u64,
}

pub(crate) fn record(path: &Path, bytes: u64) {
    READS.with(|r| {
        let mut r = r.borrow_mut();
        let e = r.entry(path.to_path_buf()).or_default();
        e.calls += 1;
        e.bytes += bytes;
    });
}

/// Clears this thread's counters.
pub fn reset() {
    READS.with(|r| r.borrow_mut().clear());
}

/// Reads recorded on this thread since the last [`reset`], per file.
pub fn snapshot() -> BTreeMap<PathBuf, FileReads> {
    READS.with(|r| r.borrow().clone())
}

/// Total bytes read on this thread from files with the given extension.
pub fn bytes_with_extension(ext: &str) -> u64 {
    READS.with(|r| {
        r.borrow()
            .iter()
            .filter(|(p, _)| p.extension().is_some_and(|e| e == ext))
            .map(|(_, f)| f.bytes)
            .sum()
    })
}

/// Runs `f` with fresh counters and returns its result with the reads it made.
pub fn track<T>(f: impl FnOnce() -> T) -> (T, BTreeMap<PathBuf, FileReads>) {
    let saved = READS.with(|r| std::mem::take(&mut *r.borrow_mut()));
    let out = f();
    let seen = READS.with(|r| std::mem::replace(&mut *r.borrow_mut(), saved));
    (out, seen)
}
