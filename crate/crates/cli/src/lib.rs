//! Front end for `mixbound`: spec ingestion, reports and the `verify`,
//! `envelope` and `sample` commands.
//!
//! Exit codes: 0 success, 1 a verified property failed, 2 malformed input,
//! 3 exact enumeration over `--max-exact-states`, 4 numeric validation
//! failure. Failures print one `error code=N kind=K key=value ...` line on
//! stderr.

pub mod app;
pub mod error;
pub mod report;
pub mod spec;
pub mod verify;
